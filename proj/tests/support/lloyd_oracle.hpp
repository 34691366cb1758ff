// Gaussian quadrature oracle for Lloyd-Max designs: Simpson's rule on the
// N(0,1) density, no closed-form partial moments.
#pragma once

#include "qprec/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace qprec::testing {

inline double pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Composite Simpson rule of f(x) * pdf(x) over [a, b] with infinite ends clipped at +-12.
template <typename F>
double integrate(F f, double a, double b, int panels = 4000) {
  a = std::max(a, -12.0);
  b = std::min(b, 12.0);
  if (b <= a) return 0.0;
  const double h = (b - a) / panels;
  double s = f(a) * pdf(a) + f(b) * pdf(b);
  for (int i = 1; i < panels; ++i) {
    const double x = a + i * h;
    s += (i % 2 ? 4.0 : 2.0) * f(x) * pdf(x);
  }
  return s * h / 3.0;
}

// Lloyd iteration with quadrature in place of closed-form partial moments.
inline std::vector<double> numeric_lloyd(std::vector<double> levels, int iterations) {
  const int n = static_cast<int>(levels.size());
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> t(n + 1);
    t[0] = -INFINITY;
    t[n] = INFINITY;
    for (int i = 1; i < n; ++i) t[i] = 0.5 * (levels[i - 1] + levels[i]);
    for (int i = 0; i < n; ++i) {
      const double mass = integrate([](double) { return 1.0; }, t[i], t[i + 1]);
      const double first = integrate([](double x) { return x; }, t[i], t[i + 1]);
      levels[i] = first / mass;
    }
  }
  return levels;
}

inline double numeric_msqe(const ScalarQuantizer& q) {
  double total = 0.0;
  for (int i = 0; i < q.num_levels(); ++i) {
    const double l = q.levels[i];
    total += integrate([l](double x) { return (x - l) * (x - l); }, q.thresholds[i], q.thresholds[i + 1]);
  }
  return total;
}

}  // namespace qprec::testing
