#include "qprec/rng.hpp"

#include <cmath>
#include <numbers>

namespace qprec {

namespace {

std::seed_seq make_seq(std::uint64_t seed, Stream stream, std::uint64_t index) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  return std::seed_seq{lo(seed), hi(seed), static_cast<std::uint32_t>(stream), lo(index),
                       hi(index)};
}

}  // namespace

Rng::Rng(std::uint64_t seed, Stream stream, std::uint64_t index) {
  auto seq = make_seq(seed, stream, index);
  engine_.seed(seq);
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = engine_();
  while (v >= limit) v = engine_();
  return v % n;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

std::complex<double> Rng::complex_normal() {
  const double re = normal() * std::numbers::sqrt2 / 2.0;
  const double im = normal() * std::numbers::sqrt2 / 2.0;
  return {re, im};
}

}  // namespace qprec
