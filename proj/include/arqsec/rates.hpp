#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "arqsec/error.hpp"
#include "arqsec/expint.hpp"
#include "arqsec/fading.hpp"
#include "arqsec/random.hpp"
#include "arqsec/stats.hpp"

namespace arqsec {

struct RateParams {
  double r0 = 0.0;     // bits per channel use
  double p = 1.0;      // transmit SNR, linear
  double p_bar = 1.0;  // power cap, linear
  double rc = 0.0;     // genie side information at Eve, bits per channel use

  static RateParams at(double r0, double p, double rc = 0.0) { return {r0, p, p, rc}; }

  void validate() const {
    detail::require(r0 >= 0.0 && std::isfinite(r0), "rate params: R0 must be >= 0");
    detail::require(rc >= 0.0 && std::isfinite(rc), "rate params: Rc must be >= 0");
    detail::require(p >= 0.0 && std::isfinite(p), "rate params: P must be >= 0");
    detail::require(p <= p_bar, "rate params: P must not exceed P_bar");
  }
};

struct RateSolution {
  RateParams params;
  double value = 0.0;
  double std_err = 0.0;  // Monte Carlo standard error; 0 for closed forms
  bool underflow = false;
};

/// log2(1 + h P), the capacity of one block.
inline double block_capacity(double h, double p) { return std::log1p(h * p) / std::numbers::ln2; }

namespace detail {

inline void require_samples(std::size_t n) {
  require(n >= 1000, "Monte Carlo estimators need at least 1000 samples");
}

// Success probabilities below this clamp to 0 and set the underflow flag.
inline constexpr double kUnderflow = 1e-300;

inline double success_exponent(double r0, double p) { return std::expm1(r0 * std::numbers::ln2) / p; }

inline void require_positive_snr(double p, const char* who) {
  if (!(p > 0.0) || !std::isfinite(p)) throw DomainError(std::string(who) + ": P must be positive");
}

}  // namespace detail

/// E[r0 - log2(1 + h P)]^+ for h ~ Exp(1):
///   r0 - (e^{1/P} / ln 2) [E1(1/P) - E1(2^{r0}/P)].
/// Scale the SNR by the mean gain for exponential laws with another mean.
inline double rayleigh_eve_margin(double r0, double p) {
  detail::require_positive_snr(p, "rayleigh_eve_margin");
  if (r0 < 0.0) throw DomainError("rayleigh_eve_margin: R0 must be >= 0");
  if (r0 == 0.0) return 0.0;
  const double lo = 1.0 / p;
  const double hi = std::exp2(r0) / p;
  // e^{lo} [E1(lo) - E1(hi)] = scaled(lo) - e^{lo - hi} scaled(hi)
  const double diff =
      special::expint_e1_scaled(lo) - std::exp(lo - hi) * special::expint_e1_scaled(hi);
  return std::max(0.0, r0 - diff / std::numbers::ln2);
}

/// Pr(r0 <= log2(1 + h P)) for h ~ Exp(1), with the underflow clamp.
inline double rayleigh_success_prob(double r0, double p, bool* underflow = nullptr) {
  detail::require_positive_snr(p, "rayleigh_success_prob");
  const double t = detail::success_exponent(r0, p);
  const double v = std::exp(-t);
  const bool clamp = !(v >= detail::kUnderflow);
  if (underflow) *underflow = clamp;
  return clamp ? 0.0 : v;
}

/// Key rate of the symmetric, spatially independent Rayleigh channel with
/// unit mean gains at a fixed (R0, P).
inline RateSolution key_rate_rayleigh(double r0, double p) {
  detail::require_positive_snr(p, "key_rate_rayleigh_closed_form");
  if (r0 < 0.0) throw DomainError("key_rate_rayleigh_closed_form: R0 must be >= 0");
  RateSolution s;
  s.params = RateParams::at(r0, p);
  const double ps = rayleigh_success_prob(r0, p, &s.underflow);
  s.value = ps == 0.0 ? 0.0 : ps * rayleigh_eve_margin(r0, p);
  return s;
}

inline double key_rate_rayleigh_closed_form(double r0, double p) { return key_rate_rayleigh(r0, p).value; }

/// Erasure-wiretap capacity of the same channel:
/// R0 exp(-(2^{R0}-1)/P) (1 - exp(-(2^{R0-Rc}-1)/P)).
inline RateSolution erasure_capacity_rayleigh(double r0, double p, double rc) {
  detail::require_positive_snr(p, "erasure_capacity_rayleigh");
  if (r0 < 0.0 || rc < 0.0) throw DomainError("erasure_capacity_rayleigh: rates must be >= 0");
  RateSolution s;
  s.params = RateParams::at(r0, p, rc);
  if (r0 <= rc) return s;
  const double ps = rayleigh_success_prob(r0, p, &s.underflow);
  const double erase = -std::expm1(-detail::success_exponent(r0 - rc, p));
  s.value = r0 * ps * erase;
  return s;
}

/// Monte Carlo estimate of
/// E{[R0 - log2(1 + h_e P)]^+ 1(R0 <= log2(1 + h_b P))} under the joint law.
inline RateSolution key_rate_general(const FadingModel& model, const RateParams& params,
                                     std::size_t n_samples, Rng& rng) {
  model.validate();
  params.validate();
  detail::require_samples(n_samples);
  RunningStats acc;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const ChannelDraw d = sample(model, rng);
    double term = 0.0;
    if (params.r0 <= block_capacity(d.h_b, params.p))
      term = std::max(0.0, params.r0 - block_capacity(d.h_e, params.p));
    acc.add(term);
  }
  return {params, acc.mean(), acc.std_err(), false};
}

/// Product form for spatially independent fading:
/// Pr(R0 <= log2(1 + h_b P)) E[R0 - log2(1 + h_e P)]^+, the factors estimated
/// from separate draws.
inline RateSolution key_rate_independent(const Marginal& fb, const Marginal& fe,
                                         const RateParams& params, std::size_t n_samples,
                                         Rng& rng) {
  params.validate();
  detail::require_samples(n_samples);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n_samples; ++i)
    if (params.r0 <= block_capacity(fb(rng), params.p)) ++hits;
  RunningStats margin;
  for (std::size_t i = 0; i < n_samples; ++i)
    margin.add(std::max(0.0, params.r0 - block_capacity(fe(rng), params.p)));
  const MeanEstimate e = product(proportion(hits, n_samples), margin.estimate());
  return {params, e.mean, e.std_err, false};
}

/// Pr(R0 - Rc > log2(1 + h_e P)).
inline MeanEstimate eve_erasure_prob(const RateParams& params, const Marginal& he,
                                     std::size_t n_samples, Rng& rng) {
  params.validate();
  detail::require_samples(n_samples);
  std::size_t hits = 0;
  const double gap = params.r0 - params.rc;
  for (std::size_t i = 0; i < n_samples; ++i)
    if (gap > block_capacity(he(rng), params.p)) ++hits;
  return proportion(hits, n_samples);
}

/// R0 Pr(R0 <= log2(1 + h_b P), R0 - Rc > log2(1 + h_e P)); product of the two
/// marginal probabilities when the model factorizes.
inline RateSolution erasure_capacity(const FadingModel& model, const RateParams& params,
                                     std::size_t n_samples, Rng& rng) {
  model.validate();
  params.validate();
  detail::require_samples(n_samples);
  const double gap = params.r0 - params.rc;
  std::size_t bob = 0;
  std::size_t eve = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const ChannelDraw d = sample(model, rng);
    const bool ok = params.r0 <= block_capacity(d.h_b, params.p);
    const bool erased = gap > block_capacity(d.h_e, params.p);
    bob += ok;
    eve += erased;
    both += ok && erased;
  }
  MeanEstimate e = model.factorizes()
                       ? product(proportion(bob, n_samples), proportion(eve, n_samples))
                       : proportion(both, n_samples);
  return {params, params.r0 * e.mean, params.r0 * e.std_err, false};
}

/// E[log2(1 + h_b P) - log2(1 + h_e P)]^+, the ergodic secrecy rate with
/// transmitter CSI; bounds every rate-allocation policy.
inline RateSolution ergodic_upper_bound(const FadingModel& model, double p,
                                        std::size_t n_samples, Rng& rng) {
  model.validate();
  detail::require_samples(n_samples);
  if (!(p >= 0.0)) throw ConfigError("ergodic_upper_bound: P must be >= 0");
  RunningStats acc;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const ChannelDraw d = sample(model, rng);
    acc.add(std::max(0.0, block_capacity(d.h_b, p) - block_capacity(d.h_e, p)));
  }
  return {RateParams::at(0.0, p), acc.mean(), acc.std_err(), false};
}

enum class Objective { KeyRateGeneral, KeyRateIndependent, ErasureCapacity };

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::KeyRateGeneral: return "key_rate_general";
    case Objective::KeyRateIndependent: return "key_rate_independent";
    case Objective::ErasureCapacity: return "erasure_capacity";
  }
  return "?";
}

struct GridSpec {
  std::vector<double> r0;
  std::vector<double> p;

  // R0 in {0.1, ..., 10.0}; P at 20 log-spaced points in (P_bar/100, P_bar].
  static GridSpec defaults(double p_bar, double r0_max = 10.0, double r0_step = 0.1,
                           std::size_t p_points = 20) {
    GridSpec g;
    const auto steps = static_cast<std::size_t>(std::llround(r0_max / r0_step));
    for (std::size_t k = 1; k <= steps; ++k) g.r0.push_back(static_cast<double>(k) * r0_step);
    for (std::size_t k = 1; k <= p_points; ++k) {
      const double expo =
          -2.0 * static_cast<double>(p_points - k) / static_cast<double>(p_points);
      g.p.push_back(p_bar * std::pow(10.0, expo));
    }
    return g;
  }

  static GridSpec fixed_power(double p, std::vector<double> rates) {
    return {std::move(rates), {p}};
  }

  void validate(double p_bar) const {
    detail::require(!r0.empty() && !p.empty(), "optimize: empty grid");
    for (double r : r0) detail::require(r >= 0.0, "optimize: grid R0 must be >= 0");
    for (double q : p)
      detail::require(q > 0.0 && q <= p_bar * (1.0 + 1e-12), "optimize: grid P must lie in (0, P_bar]");
  }
};

/// Grid-search maximization of an objective over (R0, P <= P_bar).
///
/// A single block of channel draws is shared by every grid point (common
/// random numbers), which is the same as re-seeding each point identically;
/// the argmax is therefore stable under the sampling noise. Ties keep the
/// first point in grid order.
inline RateSolution optimize(Objective objective, const FadingModel& model, double p_bar,
                             double rc, const GridSpec& grid, std::size_t n_samples, Rng& rng) {
  model.validate();
  grid.validate(p_bar);
  detail::require_samples(n_samples);
  detail::require(rc >= 0.0, "optimize: Rc must be >= 0");

  std::vector<double> hb(n_samples);
  std::vector<double> he(n_samples);
  if (objective == Objective::KeyRateIndependent) {
    Rng rb = rng.split(1);
    Rng re = rng.split(2);
    for (std::size_t i = 0; i < n_samples; ++i) hb[i] = sample(model, rb).h_b;
    for (std::size_t i = 0; i < n_samples; ++i) he[i] = sample(model, re).h_e;
  } else {
    for (std::size_t i = 0; i < n_samples; ++i) {
      const ChannelDraw d = sample(model, rng);
      hb[i] = d.h_b;
      he[i] = d.h_e;
    }
  }
  const bool product_form = objective == Objective::ErasureCapacity && model.factorizes();

  RateSolution best;
  bool have = false;
  std::vector<double> cb(n_samples);
  std::vector<double> ce(n_samples);
  for (double p : grid.p) {
    for (std::size_t i = 0; i < n_samples; ++i) {
      cb[i] = block_capacity(hb[i], p);
      ce[i] = block_capacity(he[i], p);
    }
    for (double r0 : grid.r0) {
      MeanEstimate e;
      switch (objective) {
        case Objective::KeyRateGeneral: {
          RunningStats acc;
          for (std::size_t i = 0; i < n_samples; ++i)
            acc.add(r0 <= cb[i] ? std::max(0.0, r0 - ce[i]) : 0.0);
          e = acc.estimate();
          break;
        }
        case Objective::KeyRateIndependent: {
          std::size_t hits = 0;
          RunningStats margin;
          for (std::size_t i = 0; i < n_samples; ++i) {
            hits += r0 <= cb[i];
            margin.add(std::max(0.0, r0 - ce[i]));
          }
          e = product(proportion(hits, n_samples), margin.estimate());
          break;
        }
        case Objective::ErasureCapacity: {
          std::size_t bob = 0;
          std::size_t eve = 0;
          std::size_t both = 0;
          for (std::size_t i = 0; i < n_samples; ++i) {
            const bool ok = r0 <= cb[i];
            const bool erased = r0 - rc > ce[i];
            bob += ok;
            eve += erased;
            both += ok && erased;
          }
          e = product_form ? product(proportion(bob, n_samples), proportion(eve, n_samples))
                           : proportion(both, n_samples);
          e.mean *= r0;
          e.std_err *= r0;
          break;
        }
      }
      if (!have || e.mean > best.value) {
        best = {RateParams{r0, p, p_bar, rc}, e.mean, e.std_err, false};
        have = true;
      }
    }
  }
  return best;
}

enum class ClosedForm { KeyRate, ErasureCapacity };

/// Grid maximization of the Rayleigh closed forms (no sampling).
inline RateSolution optimize_closed_form(ClosedForm form, double p_bar, double rc,
                                         const GridSpec& grid) {
  grid.validate(p_bar);
  RateSolution best;
  bool have = false;
  for (double p : grid.p) {
    for (double r0 : grid.r0) {
      RateSolution s = form == ClosedForm::KeyRate ? key_rate_rayleigh(r0, p)
                                                   : erasure_capacity_rayleigh(r0, p, rc);
      s.params.p_bar = p_bar;
      s.params.rc = rc;
      if (!have || s.value > best.value) {
        best = s;
        have = true;
      }
    }
  }
  return best;
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

}  // namespace arqsec
