/**
 * @file rng.hpp
 * @brief Seedable random streams.
 *
 * Every random quantity in an experiment comes from an Rng built from
 * (experiment seed, stream, index). Streams are derived with std::seed_seq,
 * whose mixing algorithm is fixed by the standard, and drive a
 * std::mt19937_64. Uniform and Gaussian variates are produced here rather
 * than through <random> distributions, whose algorithms are unspecified, so
 * a seed yields the same numbers with every standard library.
 *
 * Gaussian variates use the Box-Muller transform (both outputs are used).
 * Datasets are portable across implementations through the persisted files,
 * not through seed equality.
 */
#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace qprec {

enum class Stream : std::uint32_t {
  kChannel = 1,
  kSymbol = 2,
  kGumbel = 3,
  kInit = 4,
  kShuffle = 5,
  kQuantizerInit = 6,
  kAngle = 7,
};

class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal N(0, 1).
  double normal();

  /// Circularly-symmetric CN(0, 1): real and imaginary parts N(0, 1/2).
  std::complex<double> complex_normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace qprec

namespace qprec {

/// Independent 64-bit seed for element `index` of a seeded collection.
inline std::uint64_t sub_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
  return Rng(seed, stream, index).next_u64();
}

}  // namespace qprec
