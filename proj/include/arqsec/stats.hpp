#pragma once

#include <cmath>
#include <cstddef>

namespace arqsec {

struct MeanEstimate {
  double mean = 0.0;
  double std_err = 0.0;
  std::size_t n = 0;
};

// Welford accumulator.
class RunningStats {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double std_err() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

  MeanEstimate estimate() const { return {mean(), std_err(), n_}; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Proportion estimate. A zero (or full) count would give a plug-in standard
// error of 0; the error is then bounded using one pseudo-event so that a
// rare-event probability estimated as exactly 0 still carries its resolution.
inline MeanEstimate proportion(std::size_t hits, std::size_t n) {
  MeanEstimate e;
  e.n = n;
  if (n == 0) return e;
  const double dn = static_cast<double>(n);
  e.mean = static_cast<double>(hits) / dn;
  double p = e.mean;
  if (hits == 0) p = 1.0 / dn;
  if (hits == n) p = 1.0 - 1.0 / dn;
  e.std_err = std::sqrt(p * (1.0 - p) / dn);
  return e;
}

// Delta-method error of a product of two independent estimates.
inline MeanEstimate product(const MeanEstimate& a, const MeanEstimate& b) {
  MeanEstimate e;
  e.mean = a.mean * b.mean;
  e.std_err = std::sqrt(b.mean * b.mean * a.std_err * a.std_err +
                        a.mean * a.mean * b.std_err * b.std_err);
  e.n = a.n < b.n ? a.n : b.n;
  return e;
}

inline double combined_sigma(double a, double b) { return std::sqrt(a * a + b * b); }

}  // namespace arqsec
