#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>

namespace arqsec {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Explicitly seeded, splittable random source.
//
// The engine is std::mt19937_64; every variate is derived from raw 64-bit
// words here rather than through <random> distributions, whose output is
// implementation-defined. Streams obtained with split() are keyed only by the
// parent seed and the stream id, so they do not depend on how much of the
// parent has been consumed.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng split(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream * 0xd1b54a32d192ed03ULL + 1)));
  }

  std::uint64_t operator()() { return engine_(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return ~std::uint64_t{0}; }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // (0, 1], safe for log()
  double uniform_open() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double phase() { return uniform(-std::numbers::pi, std::numbers::pi); }

  // Inverse-CDF exponential draw.
  double exponential(double mean) { return -mean * std::log(uniform_open()); }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller (one value per call, no caching).
  double normal() {
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
  }

  // Circularly symmetric CN(0, 1): each component has variance 1/2.
  std::complex<double> complex_normal() {
    const double r = std::sqrt(-std::log(uniform_open()));
    const double t = 2.0 * std::numbers::pi * uniform();
    return {r * std::cos(t), r * std::sin(t)};
  }

  // Uniform word of the given width (1..64).
  std::uint64_t bits(unsigned width) {
    const std::uint64_t w = engine_();
    return width >= 64 ? w : (w & ((std::uint64_t{1} << width) - 1));
  }

  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace arqsec
