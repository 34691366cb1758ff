#include "qprec/quantizer.hpp"

#include "qprec/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

namespace qprec {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double pdf(double x) {
  if (std::isinf(x)) return 0.0;
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

// x * pdf(x), zero at the infinite ends.
double xpdf(double x) { return std::isinf(x) ? 0.0 : x * pdf(x); }

// P(a < X <= b) for X ~ N(0,1), using whichever tail keeps precision.
double cell_probability(double a, double b) {
  if (a >= 0.0) return 0.5 * (std::erfc(a / std::numbers::sqrt2) - std::erfc(b / std::numbers::sqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b / std::numbers::sqrt2) - std::erfc(-a / std::numbers::sqrt2));
  return 1.0 - 0.5 * std::erfc(b / std::numbers::sqrt2) - 0.5 * std::erfc(-a / std::numbers::sqrt2);
}

struct Moments {
  double p;   // integral of pdf over the cell
  double m1;  // integral of x pdf
  double m2;  // integral of x^2 pdf
};

Moments cell_moments(double a, double b) {
  const double p = cell_probability(a, b);
  return {p, pdf(a) - pdf(b), p + xpdf(a) - xpdf(b)};
}

void set_thresholds(ScalarQuantizer& q) {
  const int levels = q.num_levels();
  q.thresholds.assign(static_cast<std::size_t>(levels) + 1, 0.0);
  q.thresholds.front() = -kInf;
  q.thresholds.back() = kInf;
  for (int i = 1; i < levels; ++i) {
    q.thresholds[i] = 0.5 * (q.levels[i - 1] + q.levels[i]);
  }
}

// The N(0,1) optimum is odd-symmetric; averaging the mirrored halves removes the
// residual asymmetry of the random starts and puts the middle threshold at 0.
void symmetrize(ScalarQuantizer& q) {
  const int n = q.num_levels();
  std::vector<double> sym(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) sym[i] = 0.5 * (q.levels[i] - q.levels[n - 1 - i]);
  q.levels = std::move(sym);
  set_thresholds(q);
}

struct RunResult {
  ScalarQuantizer q;
  double msqe;
  bool converged;
};

RunResult refine(std::vector<double> levels, int bits, const LloydMaxOptions& opt) {
  ScalarQuantizer q{bits, std::move(levels), {}};
  set_thresholds(q);
  bool converged = false;
  for (int it = 0; it < opt.max_iterations && !converged; ++it) {
    double change = 0.0;
    for (int i = 0; i < q.num_levels(); ++i) {
      const Moments mo = cell_moments(q.thresholds[i], q.thresholds[i + 1]);
      if (mo.p <= 0.0) continue;  // empty cell: keep the level
      const double centroid = mo.m1 / mo.p;
      change = std::max(change, std::abs(centroid - q.levels[i]));
      q.levels[i] = centroid;
    }
    set_thresholds(q);
    converged = change < opt.tol;
  }
  return {q, gaussian_msqe(q), converged};
}

std::string fmt17(double v) {
  if (std::isinf(v)) return v < 0 ? "\"-inf\"" : "\"inf\"";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int ScalarQuantizer::cell_index(double x) const {
  if (std::isnan(x)) throw InvalidArgument("cannot quantize NaN");
  // Number of interior thresholds strictly below x.
  const auto first = thresholds.begin() + 1;
  const auto last = thresholds.end() - 1;
  return static_cast<int>(std::lower_bound(first, last, x) - first);
}

ScalarQuantizer lloyd_max(int bits, const LloydMaxOptions& options) {
  if (bits < 1 || bits > 8) throw InvalidArgument("Lloyd-Max supports 1 <= b <= 8");
  if (options.n_init < 1) throw InvalidArgument("n_init must be >= 1");
  const int levels = 1 << bits;

  RunResult best{{}, kInf, false};
  RunResult best_any{{}, kInf, false};
  for (int start = 0; start < options.n_init; ++start) {
    Rng rng(options.seed, Stream::kQuantizerInit, static_cast<std::uint64_t>(start));
    std::vector<double> init(static_cast<std::size_t>(levels));
    do {
      for (auto& v : init) v = rng.normal();
      std::sort(init.begin(), init.end());
    } while (std::adjacent_find(init.begin(), init.end()) != init.end());

    RunResult run = refine(std::move(init), bits, options);
    if (run.msqe < best_any.msqe) best_any = run;
    if (run.converged && run.msqe < best.msqe) best = std::move(run);
  }
  if (!best.converged) {
    throw LloydMaxNotConverged("Lloyd-Max did not converge to tol " + std::to_string(options.tol) +
                                   " within " + std::to_string(options.max_iterations) +
                                   " iterations",
                               best_any.q);
  }
  symmetrize(best.q);
  return best.q;
}

double gaussian_msqe(const ScalarQuantizer& q) {
  double total = 0.0;
  for (int i = 0; i < q.num_levels(); ++i) {
    const Moments mo = cell_moments(q.thresholds[i], q.thresholds[i + 1]);
    const double l = q.levels[i];
    total += mo.m2 - 2.0 * l * mo.m1 + l * l * mo.p;
  }
  return total;
}

double quantize_real(double x, const ScalarQuantizer& q) {
  return q.levels[static_cast<std::size_t>(q.cell_index(x))];
}

CVector quantize_complex(const CVector& x, const ScalarQuantizer& q,
                         std::span<const double> rho) {
  if (static_cast<std::size_t>(x.size()) != rho.size()) {
    throw InvalidArgument("normalization vector length does not match input");
  }
  CVector y(x.size());
  for (Eigen::Index m = 0; m < x.size(); ++m) {
    const double r = rho[static_cast<std::size_t>(m)];
    if (!(r > 0.0)) throw InvalidArgument("normalization factor rho_m must be positive");
    const double in_scale = std::sqrt(r / 2.0);  // unit variance per real dimension
    y[m] = std::sqrt(r) * cdouble(quantize_real(x[m].real() / in_scale, q),
                                  quantize_real(x[m].imag() / in_scale, q));
  }
  return y;
}

std::string quantizer_to_json(const ScalarQuantizer& q) {
  std::ostringstream out;
  out << "{\n  \"b\": " << q.bits << ",\n  \"levels\": [";
  for (std::size_t i = 0; i < q.levels.size(); ++i) {
    out << (i ? ", " : "") << fmt17(q.levels[i]);
  }
  out << "],\n  \"thresholds\": [";
  for (std::size_t i = 0; i < q.thresholds.size(); ++i) {
    out << (i ? ", " : "") << fmt17(q.thresholds[i]);
  }
  out << "]\n}\n";
  return out.str();
}

void save_quantizer(const std::filesystem::path& path, const ScalarQuantizer& q) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << quantizer_to_json(q);
  if (!out) throw IoError("write failed for " + path.string());
}

ScalarQuantizer quantizer_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed quantizer file: ") + e.what());
  }
  const auto number = [](const nlohmann::json& v) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") return kInf;
      if (s == "-inf") return -kInf;
      throw IoError("unexpected string value in quantizer file: " + s);
    }
    return v.get<double>();
  };
  try {
    ScalarQuantizer q;
    q.bits = j.at("b").get<int>();
    for (const auto& v : j.at("levels")) q.levels.push_back(number(v));
    for (const auto& v : j.at("thresholds")) q.thresholds.push_back(number(v));
    if (q.bits < 1 || q.num_levels() != (1 << q.bits) ||
        q.thresholds.size() != q.levels.size() + 1 || !std::is_sorted(q.levels.begin(), q.levels.end()) ||
        !std::is_sorted(q.thresholds.begin(), q.thresholds.end())) {
      throw IoError("inconsistent quantizer file");
    }
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed quantizer file: ") + e.what());
  }
}

ScalarQuantizer load_quantizer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return quantizer_from_json(ss.str());
}

}  // namespace qprec
