#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "arqsec/error.hpp"
#include "arqsec/random.hpp"
#include "arqsec/stats.hpp"

namespace arqsec {

/// One coherence interval: power gains (linear) and phases of the Alice-Bob
/// and Alice-Eve channels.
struct ChannelDraw {
  double h_b = 0.0;
  double h_e = 0.0;
  double theta_b = 0.0;
  double theta_e = 0.0;
};

// Per-antenna magnitudes for the dumb-antenna phasor sum.
enum class AntennaGains {
  LineOfSight,         // every magnitude is one
  CorrelatedRayleigh,  // exponential power per antenna, shared by Bob and Eve
};

namespace fading_kind {

struct RayleighIndependent {};
struct FullyCorrelated {};

struct DumbAntenna {
  unsigned n = 1;
  AntennaGains gains = AntennaGains::LineOfSight;
};

// Returns (h_b, h_e) for one block. `independent` tells the rate estimators
// that the joint law factorizes.
struct Custom {
  std::function<std::pair<double, double>(Rng&)> sampler;
  bool independent = false;
};

}  // namespace fading_kind

struct FadingModel {
  using Kind = std::variant<fading_kind::RayleighIndependent, fading_kind::FullyCorrelated,
                            fading_kind::DumbAntenna, fading_kind::Custom>;

  Kind kind = fading_kind::RayleighIndependent{};
  double mean_b = 1.0;
  double mean_e = 1.0;

  static FadingModel rayleigh(double mean_b = 1.0, double mean_e = 1.0) {
    return {fading_kind::RayleighIndependent{}, mean_b, mean_e};
  }
  static FadingModel fully_correlated(double mean = 1.0) {
    return {fading_kind::FullyCorrelated{}, mean, mean};
  }
  static FadingModel dumb_antenna(unsigned n, AntennaGains gains = AntennaGains::LineOfSight) {
    return {fading_kind::DumbAntenna{n, gains}, 1.0, 1.0};
  }
  static FadingModel custom(std::function<std::pair<double, double>(Rng&)> sampler,
                            bool independent = false) {
    return {fading_kind::Custom{std::move(sampler), independent}, 1.0, 1.0};
  }

  void validate() const {
    detail::require(mean_b > 0.0 && std::isfinite(mean_b), "fading: mean_b must be positive");
    detail::require(mean_e > 0.0 && std::isfinite(mean_e), "fading: mean_e must be positive");
    if (std::holds_alternative<fading_kind::FullyCorrelated>(kind))
      detail::require(mean_b == mean_e, "fading: fully correlated model needs mean_b == mean_e");
    if (const auto* d = std::get_if<fading_kind::DumbAntenna>(&kind))
      detail::require(d->n >= 1, "fading: dumb antenna count must be >= 1");
    if (const auto* c = std::get_if<fading_kind::Custom>(&kind))
      detail::require(static_cast<bool>(c->sampler), "fading: custom sampler is empty");
  }

  bool factorizes() const {
    if (std::holds_alternative<fading_kind::RayleighIndependent>(kind)) return true;
    if (const auto* c = std::get_if<fading_kind::Custom>(&kind)) return c->independent;
    return false;
  }

  std::string name() const {
    struct Visitor {
      std::string operator()(const fading_kind::RayleighIndependent&) const {
        return "rayleigh_independent";
      }
      std::string operator()(const fading_kind::FullyCorrelated&) const {
        return "fully_correlated";
      }
      std::string operator()(const fading_kind::DumbAntenna& d) const {
        return "dumb_antenna(" + std::to_string(d.n) + ")";
      }
      std::string operator()(const fading_kind::Custom&) const { return "custom"; }
    };
    return std::visit(Visitor{}, kind);
  }
};

/// Equivalent channel gains of N dumb antennas for one ARQ frame:
/// g = N^{-1/2} sum_i a_i exp(j(theta_iR + theta_iX)), X in {B, E}, with all
/// phases i.i.d. uniform on [-pi, pi] and fresh per call.
inline std::pair<std::complex<double>, std::complex<double>> dumb_antenna_gains(
    unsigned n, Rng& rng, AntennaGains gains = AntennaGains::LineOfSight) {
  if (n == 0) throw ConfigError("dumb_antenna_gains: N must be >= 1");
  std::complex<double> gb{0.0, 0.0};
  std::complex<double> ge{0.0, 0.0};
  for (unsigned i = 0; i < n; ++i) {
    const double tr = rng.phase();
    const double tb = rng.phase();
    const double te = rng.phase();
    const double a =
        gains == AntennaGains::LineOfSight ? 1.0 : std::sqrt(rng.exponential(1.0));
    gb += std::polar(a, tr + tb);
    ge += std::polar(a, tr + te);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  return {gb * scale, ge * scale};
}

/// One i.i.d. draw from the model's joint law. Phases are always independent
/// uniform; for dumb antennas they are the arguments of the equivalent gains.
inline ChannelDraw sample(const FadingModel& model, Rng& rng) {
  model.validate();
  ChannelDraw d;
  struct Visitor {
    const FadingModel& m;
    Rng& rng;
    ChannelDraw& d;
    void operator()(const fading_kind::RayleighIndependent&) const {
      d.h_b = rng.exponential(m.mean_b);
      d.h_e = rng.exponential(m.mean_e);
      d.theta_b = rng.phase();
      d.theta_e = rng.phase();
    }
    void operator()(const fading_kind::FullyCorrelated&) const {
      d.h_b = rng.exponential(m.mean_b);
      d.h_e = d.h_b;
      d.theta_b = rng.phase();
      d.theta_e = rng.phase();
    }
    void operator()(const fading_kind::DumbAntenna& a) const {
      const auto [gb, ge] = dumb_antenna_gains(a.n, rng, a.gains);
      d.h_b = m.mean_b * std::norm(gb);
      d.h_e = m.mean_e * std::norm(ge);
      d.theta_b = std::arg(gb);
      d.theta_e = std::arg(ge);
    }
    void operator()(const fading_kind::Custom& c) const {
      const auto [hb, he] = c.sampler(rng);
      d.h_b = hb;
      d.h_e = he;
      d.theta_b = rng.phase();
      d.theta_e = rng.phase();
    }
  };
  std::visit(Visitor{model, rng, d}, model.kind);
  return d;
}

/// Marginal sampler of a single power gain.
using Marginal = std::function<double(Rng&)>;

inline Marginal exponential_marginal(double mean = 1.0) {
  return [mean](Rng& rng) { return rng.exponential(mean); };
}

inline Marginal point_mass(double h) {
  return [h](Rng&) { return h; };
}

inline Marginal bob_marginal(FadingModel model) {
  return [m = std::move(model)](Rng& rng) { return sample(m, rng).h_b; };
}

inline Marginal eve_marginal(FadingModel model) {
  return [m = std::move(model)](Rng& rng) { return sample(m, rng).h_e; };
}

struct DecorrelationStats {
  double rho_mean = 0.0;
  double rho_var = 0.0;
  double rho_mean_std_err = 0.0;
  std::size_t trials = 0;
};

/// rho = 2/(N(N-1)) sum_{i<j} cos(D_i - D_j) for phase differences
/// D_i = theta_iB - theta_iE, using the identity
/// sum_{i<j} cos(D_i - D_j) = (|sum_i e^{jD_i}|^2 - N) / 2.
inline double decorrelation_coefficient(std::span<const double> delta) {
  std::complex<double> s{0.0, 0.0};
  for (double d : delta) s += std::polar(1.0, d);
  const double dn = static_cast<double>(delta.size());
  return (std::norm(s) - dn) / (dn * (dn - 1.0));
}

inline DecorrelationStats decorrelation_stats(unsigned n, std::size_t trials, Rng& rng) {
  if (n < 2) throw ConfigError("decorrelation_stats: N must be >= 2");
  if (trials < 2) throw ConfigError("decorrelation_stats: need at least two trials");
  std::vector<double> delta(n);
  RunningStats acc;
  for (std::size_t t = 0; t < trials; ++t) {
    for (unsigned i = 0; i < n; ++i) delta[i] = rng.phase() - rng.phase();
    acc.add(decorrelation_coefficient(delta));
  }
  return {acc.mean(), acc.variance(), acc.std_err(), trials};
}

/// First-order Gauss-Markov complex gain
/// g(t) = (1 - alpha) g(t-1) + sqrt(2 alpha - alpha^2) w(t),  w ~ CN(0, 1).
class MarkovChannel {
 public:
  MarkovChannel(double alpha, std::complex<double> initial) : alpha_(alpha), state_(initial) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw ConfigError("MarkovChannel: alpha must lie in [0, 1]");
  }

  // Starts from the stationary law CN(0, 1).
  static MarkovChannel stationary(double alpha, Rng& rng) {
    const auto g0 = rng.complex_normal();
    return MarkovChannel(alpha, g0);
  }

  double alpha() const { return alpha_; }
  std::complex<double> state() const { return state_; }
  double power() const { return std::norm(state_); }

  std::complex<double> step(Rng& rng) {
    const double keep = 1.0 - alpha_;
    const double innov = std::sqrt(2.0 * alpha_ - alpha_ * alpha_);
    state_ = keep * state_ + innov * rng.complex_normal();
    return state_;
  }

 private:
  double alpha_;
  std::complex<double> state_;
};

inline std::complex<double> markov_step(MarkovChannel& chan, Rng& rng) { return chan.step(rng); }

}  // namespace arqsec
