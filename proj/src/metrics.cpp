#include "qprec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qprec {

BussgangEstimate estimate_bussgang(const SymbolBatch& symbols, const CMatrix& outputs,
                                   GainEstimator estimator) {
  const Eigen::Index n = symbols.symbols.rows();
  const Eigen::Index users = symbols.symbols.cols();
  if (outputs.cols() != n) {
    throw InvalidArgument("output batch has " + std::to_string(outputs.cols()) +
                          " samples, symbol batch has " + std::to_string(n));
  }
  if (n < users + 1) throw InvalidArgument("Bussgang estimate needs N_s >= K + 1");

  const double inv_n = 1.0 / static_cast<double>(n);
  const CMatrix& s = symbols.symbols;  // N x K; s_n^T is row n
  CMatrix gain = inv_n * outputs * s.conjugate();
  if (estimator == GainEstimator::kSampleCovariance) {
    // E[s s^H] sample estimate is (1/N) S^T S^*; G <- G R^{-1}, R Hermitian.
    const CMatrix cov = inv_n * s.transpose() * s.conjugate();
    const Eigen::LLT<CMatrix> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("symbol covariance is singular");
    gain = llt.solve(gain.adjoint()).adjoint();
  }
  const CMatrix q = outputs - gain * s.transpose();
  CMatrix cov_q = inv_n * q * q.adjoint();
  cov_q = 0.5 * (cov_q + cov_q.adjoint()).eval();
  return {std::move(gain), std::move(cov_q), static_cast<int>(n)};
}

AntennaBussgang per_antenna_bussgang(const CMatrix& inputs, const CMatrix& outputs) {
  if (inputs.rows() != outputs.rows() || inputs.cols() != outputs.cols()) {
    throw InvalidArgument("input/output batches differ in shape");
  }
  AntennaBussgang out;
  for (Eigen::Index m = 0; m < inputs.rows(); ++m) {
    const double px = inputs.row(m).squaredNorm();
    if (!(px > 0.0)) throw NumericalError("zero-power antenna stream " + std::to_string(m));
    const double err = (inputs.row(m) - outputs.row(m)).squaredNorm();
    const cdouble cross = outputs.row(m).dot(inputs.row(m));  // sum conj(x) y
    const double beta = err / px;
    out.beta.push_back(beta);
    out.alpha.push_back(1.0 - beta);
    out.alpha_direct.push_back(cross.real() / px);
  }
  return out;
}

std::vector<double> snidr(const ChannelMatrix& channel, const BussgangEstimate& estimate,
                          double noise_variance) {
  if (!(noise_variance > 0.0)) throw InvalidArgument("noise variance must be positive");
  const auto& h = channel.entries;
  if (estimate.gain.rows() != h.rows() || estimate.gain.cols() != h.cols() ||
      estimate.distortion_cov.rows() != h.rows()) {
    throw InvalidArgument("Bussgang estimate does not match channel dimensions");
  }
  const CMatrix t = h.transpose() * estimate.gain;  // K x K, t(k, j) = h_k^T g_j
  const CMatrix hc = h.transpose() * estimate.distortion_cov;
  std::vector<double> out(static_cast<std::size_t>(h.cols()));
  for (Eigen::Index k = 0; k < h.cols(); ++k) {
    const double signal = std::norm(t(k, k));
    const double interference = t.row(k).squaredNorm() - signal;
    const double distortion = (hc.row(k) * h.col(k).conjugate())(0, 0).real();
    out[static_cast<std::size_t>(k)] =
        signal / (std::max(interference, 0.0) + std::max(distortion, 0.0) + noise_variance);
  }
  return out;
}

double sum_rate(std::span<const double> snidr_per_user) {
  double r = 0.0;
  for (double v : snidr_per_user) r += std::log2(1.0 + v);
  return r;
}

double sum_rate(const ChannelMatrix& channel, const BussgangEstimate& estimate,
                double noise_variance) {
  return sum_rate(snidr(channel, estimate, noise_variance));
}

double noise_variance(double total_power, double snr_db) {
  return total_power / std::pow(10.0, snr_db / 10.0);
}

EvalReport evaluate(const ChannelMatrix& channel, const BussgangEstimate& estimate,
                    double total_power, double snr_db) {
  EvalReport r;
  r.snr_db = snr_db;
  r.snidr_per_user = snidr(channel, estimate, noise_variance(total_power, snr_db));
  r.r_sum = sum_rate(r.snidr_per_user);
  return r;
}

void NmseAccumulator::add(const SymbolBatch& symbols, const CMatrix& received) {
  const CMatrix& s = symbols.symbols;  // N x K
  if (received.rows() != s.cols() || received.cols() != s.rows()) {
    throw InvalidArgument("received samples must be K x N_s");
  }
  for (Eigen::Index k = 0; k < s.cols(); ++k) {
    const auto r = received.row(k).transpose();
    const auto sk = s.col(k);
    const double sk_energy = sk.squaredNorm();
    const cdouble g = sk.dot(r) / sk_energy;  // sum conj(s) r / sum |s|^2
    const double r_scale = std::sqrt(r.squaredNorm() / static_cast<double>(r.size()));
    if (!(std::abs(g) > 1e-12 * std::max(r_scale, 1e-300))) {
      throw NumericalError("degenerate link: equalizer gain is zero for user " + std::to_string(k));
    }
    error_energy_ += (sk - r / g).squaredNorm();
    symbol_energy_ += sk_energy;
  }
}

double NmseAccumulator::linear() const {
  if (!(symbol_energy_ > 0.0)) throw InvalidArgument("NMSE of an empty set");
  return error_energy_ / symbol_energy_;
}

double NmseAccumulator::db() const { return to_db(linear()); }

double nmse_db(const SymbolBatch& symbols, const CMatrix& received) {
  NmseAccumulator acc;
  acc.add(symbols, received);
  return acc.db();
}

double to_db(double v) {
  if (std::isnan(v) || std::isinf(v)) return v;
  if (v <= 0.0) return kNmseFloorDb;
  return std::max(10.0 * std::log10(v), kNmseFloorDb);
}

std::vector<double> angle_grid(double step_deg) {
  if (!(step_deg > 0.0)) throw InvalidArgument("angle step must be positive");
  std::vector<double> grid;
  const int count = static_cast<int>(std::floor(180.0 / step_deg + 1e-9));
  for (int i = 0; i <= count; ++i) grid.push_back(i * step_deg);
  return grid;
}

std::vector<RadiationPoint> radiation_pattern(const BussgangEstimate& estimate,
                                              std::span<const double> angles_deg) {
  const int antennas = static_cast<int>(estimate.gain.rows());
  std::vector<RadiationPoint> out;
  out.reserve(angles_deg.size());
  double peak_lin = 0.0, peak_dist = 0.0;
  for (double phi : angles_deg) {
    const CVector h = gen_los_ula(antennas, std::span<const double>(&phi, 1)).entries.col(0);
    const double p_lin = (h.transpose() * estimate.gain).squaredNorm();
    const double p_dist = std::max(
        0.0, (h.transpose() * estimate.distortion_cov * h.conjugate())(0, 0).real());
    peak_lin = std::max(peak_lin, p_lin);
    peak_dist = std::max(peak_dist, p_dist);
    out.push_back({phi, p_lin, p_dist, 0.0});
  }
  // Array-factor nulls leave only rounding residue in both patterns; their ratio is meaningless.
  constexpr double kNullRelative = 1e-10;
  for (auto& p : out) {
    const bool null = p.p_lin <= kNullRelative * peak_lin && p.p_dist <= kNullRelative * peak_dist;
    if (null && peak_dist > 0.0) {
      p.p_sdr = std::numeric_limits<double>::quiet_NaN();
    } else if (p.p_dist == 0.0) {
      p.p_sdr = std::numeric_limits<double>::infinity();
    } else {
      p.p_sdr = p.p_lin / p.p_dist;
    }
  }
  return out;
}

}  // namespace qprec
