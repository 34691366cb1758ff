/**
 * @file precoders.hpp
 * @brief MRT and ZF precoding with total-power normalization, and the linear
 * precode-then-quantize transmitter.
 */
#pragma once

#include "qprec/channel.hpp"
#include "qprec/quantizer.hpp"
#include "qprec/types.hpp"

#include <vector>

namespace qprec {

enum class LinearPrecoder { kMrt, kZf };

/// W (M x K) scaled so that Tr(W W^H) = total_power.
struct PrecodingMatrix {
  CMatrix weights;
  double total_power = 0.0;
  double alpha = 0.0;  // normalization constant applied to the unnormalized precoder
};

/// Largest accepted condition number of the ZF Gram matrix H^T H^*.
inline constexpr double kZfConditionCap = 1e10;

/// W = alpha H^*.
PrecodingMatrix mrt(const ChannelMatrix& channel, double total_power);

/// W = alpha H^* (H^T H^*)^{-1}, computed with a Cholesky solve (no explicit inverse).
PrecodingMatrix zf(const ChannelMatrix& channel, double total_power);

PrecodingMatrix linear_precoder(LinearPrecoder kind, const ChannelMatrix& channel,
                                double total_power);

/// Per-antenna normalization rho_m = ||w_m||^2 (row norms of W).
std::vector<double> antenna_powers(const PrecodingMatrix& w);

/// Precoded inputs X = W S^T and DAC outputs Y, both M x N_s.
struct LinearTransmission {
  CMatrix inputs;
  CMatrix outputs;
};

/// x_n = W s_n, then each antenna output is quantized with rho_m = ||w_m||^2.
/// A null quantizer is the infinite-resolution bypass (Y = X).
LinearTransmission linear_quantized_tx(const PrecodingMatrix& w, const ScalarQuantizer* quantizer,
                                       const SymbolBatch& symbols);

}  // namespace qprec
