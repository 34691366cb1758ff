#include "qprec/precoders.hpp"

#include <cmath>
#include <sstream>

namespace qprec {

namespace {

void check_power(double total_power) {
  if (!(total_power > 0.0)) throw InvalidArgument("transmit power must be positive");
}

}  // namespace

PrecodingMatrix mrt(const ChannelMatrix& channel, double total_power) {
  check_power(total_power);
  const double norm2 = channel.entries.squaredNorm();
  if (!(norm2 > 0.0)) throw NumericalError("MRT undefined for an all-zero channel");
  const double alpha = std::sqrt(total_power / norm2);
  return {alpha * channel.entries.conjugate(), total_power, alpha};
}

PrecodingMatrix zf(const ChannelMatrix& channel, double total_power) {
  check_power(total_power);
  const auto& h = channel.entries;
  if (h.cols() > h.rows()) {
    throw InvalidArgument("ZF needs K <= M (got K=" + std::to_string(h.cols()) +
                          ", M=" + std::to_string(h.rows()) + ")");
  }
  // (H^T H^*)^T = H^H H is Hermitian positive definite when H has full column rank.
  const CMatrix gram_t = h.adjoint() * h;
  const Eigen::SelfAdjointEigenSolver<CMatrix> eig(gram_t, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > kZfConditionCap) {
    std::ostringstream msg;
    msg << "ZF Gram matrix is singular or ill-conditioned (condition number "
        << (lo > 0.0 ? hi / lo : INFINITY) << " exceeds cap " << kZfConditionCap << ")";
    throw NumericalError(msg.str());
  }
  const Eigen::LLT<CMatrix> llt(gram_t);
  if (llt.info() != Eigen::Success) throw NumericalError("ZF Cholesky factorization failed");
  // W0 = H^* G^{-1}  <=>  W0^T = (G^T)^{-1} H^H.
  const CMatrix w0 = llt.solve(h.adjoint()).transpose();
  const double alpha = std::sqrt(total_power / w0.squaredNorm());
  return {alpha * w0, total_power, alpha};
}

PrecodingMatrix linear_precoder(LinearPrecoder kind, const ChannelMatrix& channel,
                                double total_power) {
  return kind == LinearPrecoder::kMrt ? mrt(channel, total_power) : zf(channel, total_power);
}

std::vector<double> antenna_powers(const PrecodingMatrix& w) {
  std::vector<double> rho(static_cast<std::size_t>(w.weights.rows()));
  for (Eigen::Index m = 0; m < w.weights.rows(); ++m) {
    rho[static_cast<std::size_t>(m)] = w.weights.row(m).squaredNorm();
  }
  return rho;
}

LinearTransmission linear_quantized_tx(const PrecodingMatrix& w, const ScalarQuantizer* quantizer,
                                       const SymbolBatch& symbols) {
  if (symbols.users() != w.weights.cols()) {
    throw InvalidArgument("symbol batch has " + std::to_string(symbols.users()) +
                          " users, precoder expects " + std::to_string(w.weights.cols()));
  }
  LinearTransmission tx;
  tx.inputs = w.weights * symbols.symbols.transpose();
  if (quantizer == nullptr) {
    tx.outputs = tx.inputs;
    return tx;
  }
  const auto rho = antenna_powers(w);
  tx.outputs.resize(tx.inputs.rows(), tx.inputs.cols());
  for (Eigen::Index n = 0; n < tx.inputs.cols(); ++n) {
    tx.outputs.col(n) = quantize_complex(tx.inputs.col(n), *quantizer, rho);
  }
  return tx;
}

}  // namespace qprec
