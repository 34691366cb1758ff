/**
 * @file metrics.hpp
 * @brief Empirical Bussgang decomposition with respect to the symbols, SNIDR,
 * achievable sum rate, NMSE and radiation patterns.
 */
#pragma once

#include "qprec/channel.hpp"
#include "qprec/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace qprec {

/// How the gain G = E[y s^H] (E[s s^H])^{-1} is estimated from a finite batch.
enum class GainEstimator {
  /// Sample cross-moment times the inverse sample symbol covariance. A batch
  /// that is an exact linear map of the symbols yields zero distortion.
  kSampleCovariance,
  /// (1/N) Y S^H, i.e. E[s s^H] replaced by I. Biased by the symbol sample
  /// covariance at finite N.
  kUnitVariance,
};

/// y = G s + q over a batch: G is M x K, C_q = E[q q^H] is M x M.
struct BussgangEstimate {
  CMatrix gain;
  CMatrix distortion_cov;
  int samples = 0;
};

/// Symbols are N x K (rows are symbol vectors), outputs are M x N.
BussgangEstimate estimate_bussgang(const SymbolBatch& symbols, const CMatrix& outputs,
                                   GainEstimator estimator = GainEstimator::kSampleCovariance);

/// Per-antenna statistics of y_m against x_m.
struct AntennaBussgang {
  std::vector<double> alpha;         // AQNM gain, 1 - beta_m
  std::vector<double> beta;          // NMSQE E|x_m - y_m|^2 / E|x_m|^2
  std::vector<double> alpha_direct;  // Re E[y_m x_m^*] / E|x_m|^2
};

/// Inputs and outputs are M x N. Throws NumericalError on a zero-power antenna.
AntennaBussgang per_antenna_bussgang(const CMatrix& inputs, const CMatrix& outputs);

/// SNIDR_k = |h_k^T g_k|^2 / (sum_{k' != k} |h_k^T g_k'|^2 + h_k^T C_q h_k^* + sigma^2).
std::vector<double> snidr(const ChannelMatrix& channel, const BussgangEstimate& estimate,
                          double noise_variance);

/// sum_k log2(1 + SNIDR_k), bits per channel use.
double sum_rate(std::span<const double> snidr_per_user);
double sum_rate(const ChannelMatrix& channel, const BussgangEstimate& estimate,
                double noise_variance);

struct EvalReport {
  std::vector<double> snidr_per_user;
  double r_sum = 0.0;
  std::optional<double> nmse_db;
  double snr_db = 0.0;
};

EvalReport evaluate(const ChannelMatrix& channel, const BussgangEstimate& estimate,
                    double total_power, double snr_db);

/// Noise variance for P_T / sigma^2 = snr_db.
double noise_variance(double total_power, double snr_db);

/// NMSE floor reported when the equalized symbols are exact.
inline constexpr double kNmseFloorDb = -300.0;

/// Pooled NMSE = sum |s - s_hat|^2 / sum |s|^2 over batches, where each user's
/// s_hat = r_k / g_k with the scalar LS gain g_k = E[r_k s_k^*] / E|s_k|^2 of
/// that batch. Received samples are K x N (noiseless r = H^T y).
class NmseAccumulator {
 public:
  void add(const SymbolBatch& symbols, const CMatrix& received);
  double linear() const;
  double db() const;

 private:
  double error_energy_ = 0.0;
  double symbol_energy_ = 0.0;
};

double nmse_db(const SymbolBatch& symbols, const CMatrix& received);

/// Linear-scale radiation pattern at one direction. sdr is +inf when the
/// distortion vanishes, NaN in a null (both patterns negligible).
struct RadiationPoint {
  double angle_deg = 0.0;
  double p_lin = 0.0;
  double p_dist = 0.0;
  double p_sdr = 0.0;
};

/// P_lin(phi) = h^T G G^H h^*, P_dist(phi) = h^T C_q h^* for the half-wavelength
/// ULA steering vector h(phi).
std::vector<RadiationPoint> radiation_pattern(const BussgangEstimate& estimate,
                                              std::span<const double> angles_deg);

/// Angles 0, step, 2*step, ..., 180.
std::vector<double> angle_grid(double step_deg);

/// 10 log10(v) with a -300 dB floor for non-positive values; NaN and +inf pass through.
double to_db(double v);

}  // namespace qprec
