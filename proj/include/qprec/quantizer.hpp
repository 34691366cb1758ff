/**
 * @file quantizer.hpp
 * @brief Lloyd-Max scalar quantizers for a standard normal input and the
 * per-antenna complex DAC model with input normalization.
 */
#pragma once

#include "qprec/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qprec {

/// Scalar quantizer with L = 2^bits levels. Cell i is (thresholds[i], thresholds[i+1]];
/// thresholds has L+1 entries with thresholds.front() = -inf, thresholds.back() = +inf.
struct ScalarQuantizer {
  int bits = 0;
  std::vector<double> levels;
  std::vector<double> thresholds;

  int num_levels() const { return static_cast<int>(levels.size()); }
  /// Index of the cell containing x. Throws InvalidArgument on NaN.
  int cell_index(double x) const;
};

struct LloydMaxOptions {
  int n_init = 16;
  double tol = 1e-10;
  int max_iterations = 10000;
  std::uint64_t seed = 0;
};

class LloydMaxNotConverged : public NumericalError {
 public:
  LloydMaxNotConverged(const std::string& what, ScalarQuantizer best)
      : NumericalError(what), best_(std::move(best)) {}
  const ScalarQuantizer& best_iterate() const { return best_; }

 private:
  ScalarQuantizer best_;
};

/// Minimum-MSQE quantizer for N(0,1) input. Each start is a sorted draw of L
/// standard normal samples, refined with the Lloyd conditions (thresholds at
/// level midpoints, levels at cell conditional means) evaluated with closed-form
/// Gaussian partial moments. Returns the lowest-MSQE converged start.
ScalarQuantizer lloyd_max(int bits, const LloydMaxOptions& options = {});

/// E[(x - Q(x))^2] for x ~ N(0,1), by closed-form partial moments.
double gaussian_msqe(const ScalarQuantizer& q);

double quantize_real(double x, const ScalarQuantizer& q);

/// Each real dimension is scaled to unit variance before Q (divide by sqrt(rho_m / 2));
/// the output is denormalized by sqrt(rho_m): y_m = sqrt(rho_m) (Q(.) + j Q(.)).
CVector quantize_complex(const CVector& x, const ScalarQuantizer& q,
                         std::span<const double> rho);

/// Writes {"b", "levels", "thresholds"} with 17 significant digits; the infinite
/// outer thresholds are written as the strings "-inf" and "inf".
void save_quantizer(const std::filesystem::path& path, const ScalarQuantizer& q);
std::string quantizer_to_json(const ScalarQuantizer& q);
ScalarQuantizer load_quantizer(const std::filesystem::path& path);
ScalarQuantizer quantizer_from_json(const std::string& text);

}  // namespace qprec
