#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "arqsec/error.hpp"
#include "arqsec/fading.hpp"
#include "arqsec/random.hpp"
#include "arqsec/rates.hpp"
#include "arqsec/stats.hpp"

namespace arqsec {

/// Discrete posterior over the legitimate power gain: point masses on an
/// increasing grid.
struct Belief {
  std::vector<double> grid;
  std::vector<double> mass;

  double total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }

  void validate() const {
    detail::require(!grid.empty() && grid.size() == mass.size(), "belief: grid/mass size mismatch");
    for (std::size_t i = 1; i < grid.size(); ++i)
      detail::require(grid[i] > grid[i - 1], "belief: grid must be strictly increasing");
    for (double m : mass) detail::require(m >= 0.0, "belief: negative mass");
    detail::require(std::abs(total() - 1.0) <= 1e-12, "belief: masses must sum to 1");
  }

  // Pr(h >= thr); index-free linear scan, for tests and one-off queries.
  double prob_at_least(double thr) const {
    double s = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
      if (grid[i] >= thr) s += mass[i];
    return s / total();
  }
};

inline std::vector<double> gain_grid(std::size_t points = 200, double lo = 1e-3, double hi = 1e2) {
  detail::require(points >= 2 && lo > 0.0 && hi > lo, "gain_grid: need points >= 2 and 0 < lo < hi");
  std::vector<double> g(points);
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) g[i] = lo * std::exp(step * static_cast<double>(i));
  g.back() = hi;
  return g;
}

/// Cell boundaries: 0, geometric midpoints, +inf.
inline std::vector<double> cell_edges(std::span<const double> grid) {
  std::vector<double> e(grid.size() + 1);
  e.front() = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) e[i] = std::sqrt(grid[i - 1] * grid[i]);
  e.back() = std::numeric_limits<double>::infinity();
  return e;
}

/// Exponential law discretized by exact cell masses.
inline Belief exponential_prior(std::vector<double> grid, double mean = 1.0) {
  detail::require(mean > 0.0, "exponential_prior: mean must be positive");
  const auto e = cell_edges(grid);
  Belief b{std::move(grid), {}};
  b.mass.resize(b.grid.size());
  for (std::size_t i = 0; i < b.mass.size(); ++i)
    b.mass[i] = std::exp(-e[i] / mean) - std::exp(-e[i + 1] / mean);
  const double t = b.total();
  for (double& m : b.mass) m /= t;
  return b;
}

/// Smallest gain that decodes rate r at SNR p.
inline double ack_threshold(double rate, double p) {
  return std::expm1(rate * std::numbers::ln2) / p;
}

/// Conditioning on one ACK/NACK with a frozen channel: ACK keeps
/// {h >= (2^R - 1)/P}, NACK keeps the complement.
inline Belief bayes_step(const Belief& b, double rate, bool ack, double p) {
  detail::require(rate >= 0.0, "bayes_step: rate must be >= 0");
  if (!(p > 0.0)) throw DomainError("bayes_step: P must be positive");
  const double thr = ack_threshold(rate, p);
  Belief out = b;
  double s = 0.0;
  for (std::size_t i = 0; i < out.mass.size(); ++i) {
    const bool keep = (out.grid[i] >= thr) == ack;
    if (!keep) out.mass[i] = 0.0;
    s += out.mass[i];
  }
  if (!(s > 0.0)) throw DegeneratePosterior("bayes_step: observation has zero posterior mass");
  for (double& m : out.mass) m /= s;
  return out;
}

namespace detail {

// e^{-z} I0(z), z >= 0.
inline double bessel_i0_scaled(double z) {
  if (z < 50.0) return std::exp(-z) * std::cyl_bessel_i(0.0, z);
  const double r = 1.0 / (8.0 * z);
  const double series = 1.0 + r * (1.0 + r * (4.5 + r * (37.5 + r * 459.375)));
  return series / std::sqrt(2.0 * std::numbers::pi * z);
}

// Density of |g'|^2 given |g|^2 = h under g' = c g + s w, w ~ CN(0, 1),
// with s2 = s^2: (1/s2) exp(-(y + c^2 h)/s2) I0(2 c sqrt(h y) / s2).
inline double rician_power_density(double y, double h, double c, double s2) {
  const double a = std::sqrt(y) - c * std::sqrt(h);
  const double z = 2.0 * c * std::sqrt(h * y) / s2;
  return std::exp(-a * a / s2) * bessel_i0_scaled(z) / s2;
}

inline constexpr std::array<double, 8> kGaussNodes = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr std::array<double, 8> kGaussWeights = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};

}  // namespace detail

/// One-step Markov transition of the power gain on the belief grid.
///
/// Row i is the law of |g(t)|^2 given |g(t-1)|^2 = grid[i], integrated over
/// each cell (8-point Gauss-Legendre on 4 panels per cell; the open top cell
/// takes the remainder) and row-normalized. Entries below 1e-16 are dropped, so
/// each row is stored as a contiguous band.
class TransitionKernel {
 public:
  TransitionKernel(std::span<const double> grid, double alpha) : alpha_(alpha), n_(grid.size()) {
    detail::require(alpha >= 0.0 && alpha <= 1.0, "transition kernel: alpha must lie in [0, 1]");
    detail::require(!grid.empty(), "transition kernel: empty grid");
    rows_.resize(n_);
    const auto edges = cell_edges(grid);
    if (alpha < 1e-9) {
      for (std::size_t i = 0; i < n_; ++i) rows_[i] = {i, {1.0}};
      return;
    }
    const double c = 1.0 - alpha;
    const double s2 = 2.0 * alpha - alpha * alpha;
    std::vector<double> row(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j + 1 < n_; ++j) {
        double cell = 0.0;
        if (alpha == 1.0) {
          cell = std::exp(-edges[j]) - std::exp(-edges[j + 1]);
        } else {
          constexpr int panels = 4;
          const double w = (edges[j + 1] - edges[j]) / panels;
          for (int k = 0; k < panels; ++k) {
            const double mid = edges[j] + (k + 0.5) * w;
            for (std::size_t q = 0; q < detail::kGaussNodes.size(); ++q) {
              const double y = mid + 0.5 * w * detail::kGaussNodes[q];
              cell += detail::kGaussWeights[q] * 0.5 * w *
                      detail::rician_power_density(y, grid[i], c, s2);
            }
          }
        }
        row[j] = cell;
        acc += cell;
      }
      row[n_ - 1] = std::max(0.0, 1.0 - acc);
      const double s = std::accumulate(row.begin(), row.end(), 0.0);
      std::size_t lo = 0;
      std::size_t hi = n_;
      while (lo < n_ && row[lo] / s < 1e-16) ++lo;
      while (hi > lo && row[hi - 1] / s < 1e-16) --hi;
      Band band{lo, std::vector<double>(row.begin() + static_cast<std::ptrdiff_t>(lo),
                                        row.begin() + static_cast<std::ptrdiff_t>(hi))};
      const double bs = std::accumulate(band.values.begin(), band.values.end(), 0.0);
      for (double& v : band.values) v /= bs;
      rows_[i] = std::move(band);
    }
  }

  double alpha() const { return alpha_; }
  std::size_t size() const { return n_; }

  double entry(std::size_t i, std::size_t j) const {
    const Band& b = rows_.at(i);
    if (j < b.start || j >= b.start + b.values.size()) return 0.0;
    return b.values[j - b.start];
  }

  Belief apply(const Belief& b) const {
    detail::require(b.mass.size() == n_, "transition kernel: belief size mismatch");
    Belief out{b.grid, std::vector<double>(n_, 0.0)};
    for (std::size_t i = 0; i < n_; ++i) {
      const double m = b.mass[i];
      if (m == 0.0) continue;
      const Band& row = rows_[i];
      double* dst = out.mass.data() + row.start;
      for (std::size_t k = 0; k < row.values.size(); ++k) dst[k] += m * row.values[k];
    }
    const double s = out.total();
    for (double& m : out.mass) m /= s;
    return out;
  }

 private:
  struct Band {
    std::size_t start = 0;
    std::vector<double> values;
  };
  double alpha_;
  std::size_t n_;
  std::vector<Band> rows_;
};

struct AdaptState {
  Belief belief;
  std::vector<double> history_rates;
  std::vector<bool> history_acks;
  double alpha = 1.0;
  std::shared_ptr<const TransitionKernel> kernel;

  static AdaptState initial(double alpha, std::vector<double> grid = gain_grid()) {
    AdaptState s;
    s.alpha = alpha;
    s.kernel = std::make_shared<const TransitionKernel>(grid, alpha);
    s.belief = exponential_prior(std::move(grid));
    return s;
  }
};

/// Bayes step on (R_prev, K_prev) followed by the Markov transition; the
/// result is the predictive belief for the next frame. Throws
/// DegeneratePosterior (state unchanged) when the observation has no support.
inline Belief belief_update(AdaptState& state, double r_prev, bool k_prev, double p) {
  if (!state.kernel) state.kernel = std::make_shared<const TransitionKernel>(state.belief.grid, state.alpha);
  const Belief posterior = bayes_step(state.belief, r_prev, k_prev, p);
  state.belief = state.kernel->apply(posterior);
  state.history_rates.push_back(r_prev);
  state.history_acks.push_back(k_prev);
  return state.belief;
}

/// One-step greedy objective Pr_belief(R <= log2(1 + h_b P)) E[R - log2(1 + h_e P)]^+,
/// with h_e exponential of the given mean (closed-form inner term).
class GreedyPolicy {
 public:
  GreedyPolicy(std::vector<double> rate_grid, double p, double eve_mean = 1.0)
      : rates_(std::move(rate_grid)) {
    detail::require(!rates_.empty(), "greedy_rate: empty rate grid");
    if (!(p > 0.0)) throw DomainError("greedy_rate: P must be positive");
    detail::require(eve_mean > 0.0, "greedy_rate: eve mean must be positive");
    thresholds_.reserve(rates_.size());
    margins_.reserve(rates_.size());
    for (double r : rates_) {
      detail::require(r >= 0.0, "greedy_rate: rates must be >= 0");
      thresholds_.push_back(ack_threshold(r, p));
      margins_.push_back(rayleigh_eve_margin(r, p * eve_mean));
    }
  }

  std::span<const double> rates() const { return rates_; }

  // Objective values for every grid rate.
  std::vector<double> objective(const Belief& b) const {
    std::vector<double> suffix(b.mass.size() + 1, 0.0);
    for (std::size_t i = b.mass.size(); i-- > 0;) suffix[i] = suffix[i + 1] + b.mass[i];
    const double total = suffix[0];
    std::vector<double> out(rates_.size());
    for (std::size_t k = 0; k < rates_.size(); ++k) {
      const auto it = std::lower_bound(b.grid.begin(), b.grid.end(), thresholds_[k]);
      const auto idx = static_cast<std::size_t>(it - b.grid.begin());
      out[k] = suffix[idx] / total * margins_[k];
    }
    return out;
  }

  // Index of the maximizing rate; ties go to the smaller rate.
  std::size_t choose_index(const Belief& b) const {
    const auto obj = objective(b);
    std::size_t best = 0;
    for (std::size_t k = 1; k < obj.size(); ++k) {
      if (obj[k] > obj[best] || (obj[k] == obj[best] && rates_[k] < rates_[best])) best = k;
    }
    return best;
  }

  double choose(const Belief& b) const { return rates_[choose_index(b)]; }

 private:
  std::vector<double> rates_;
  std::vector<double> thresholds_;
  std::vector<double> margins_;
};

inline double greedy_rate(const Belief& b, double p, double eve_mean, std::vector<double> rate_grid) {
  return GreedyPolicy(std::move(rate_grid), p, eve_mean).choose(b);
}

struct EpisodeOptions {
  std::size_t burn_in = 0;       // frames excluded from the rate
  double eve_mean = 1.0;
  std::size_t grid_points = 200;
  std::size_t batches = 20;      // batch means for the standard error
};

struct EpisodeResult {
  double rate = 0.0;
  double std_err = 0.0;
  std::size_t frames = 0;
  std::size_t degenerate_resets = 0;
};

/// Precomputed kernel, prior and policy for repeated episodes at one (alpha, P).
class AdaptModel {
 public:
  AdaptModel(double alpha, double p, std::vector<double> rate_grid, EpisodeOptions opt = {})
      : alpha_(alpha),
        p_(p),
        opt_(opt),
        prior_(exponential_prior(gain_grid(opt.grid_points))),
        kernel_(prior_.grid, alpha),
        policy_(std::move(rate_grid), p, opt.eve_mean) {}

  double alpha() const { return alpha_; }
  double snr() const { return p_; }
  const Belief& prior() const { return prior_; }
  const TransitionKernel& kernel() const { return kernel_; }
  const GreedyPolicy& policy() const { return policy_; }
  const EpisodeOptions& options() const { return opt_; }

  EpisodeResult run(std::size_t frames, Rng& rng) const {
    detail::require(frames >= 1000, "run_adaptive_episode: need at least 1000 frames");
    detail::require(opt_.burn_in < frames, "run_adaptive_episode: burn-in must be shorter than the episode");
    Rng chan_rng = rng.split(1);
    Rng eve_rng = rng.split(2);
    MarkovChannel chan = MarkovChannel::stationary(alpha_, chan_rng);
    Belief belief = prior_;
    EpisodeResult res;
    res.frames = frames;
    const std::size_t counted = frames - opt_.burn_in;
    const std::size_t batches = std::max<std::size_t>(2, std::min(opt_.batches, counted));
    std::vector<double> batch_sum(batches, 0.0);
    std::vector<std::size_t> batch_n(batches, 0);
    double total = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double r = policy_.choose(belief);
      const bool ack = r <= block_capacity(chan.power(), p_);
      const double he = eve_rng.exponential(opt_.eve_mean);
      const double inc = ack ? std::max(0.0, r - block_capacity(he, p_)) : 0.0;
      if (t >= opt_.burn_in) {
        const std::size_t k = (t - opt_.burn_in) * batches / counted;
        batch_sum[k] += inc;
        ++batch_n[k];
        total += inc;
      }
      try {
        belief = kernel_.apply(bayes_step(belief, r, ack, p_));
      } catch (const DegeneratePosterior&) {
        belief = prior_;
        ++res.degenerate_resets;
      }
      chan.step(chan_rng);
    }
    res.rate = total / static_cast<double>(counted);
    RunningStats bm;
    for (std::size_t k = 0; k < batches; ++k)
      bm.add(batch_sum[k] / static_cast<double>(batch_n[k]));
    res.std_err = bm.std_err();
    return res;
  }

 private:
  double alpha_;
  double p_;
  EpisodeOptions opt_;
  Belief prior_;
  TransitionKernel kernel_;
  GreedyPolicy policy_;
};

inline EpisodeResult run_adaptive_episode(double alpha, double p, std::size_t frames,
                                          std::vector<double> rate_grid, Rng& rng,
                                          EpisodeOptions opt = {}) {
  return AdaptModel(alpha, p, std::move(rate_grid), opt).run(frames, rng);
}

/// Best stationary rate at fixed P over the grid for independent Rayleigh
/// blocks (the alpha = 1 baseline).
inline RateSolution stationary_optimum(double p, std::span<const double> rate_grid) {
  detail::require(!rate_grid.empty(), "stationary_optimum: empty rate grid");
  RateSolution best = key_rate_rayleigh(rate_grid[0], p);
  for (double r : rate_grid.subspan(1)) {
    const RateSolution s = key_rate_rayleigh(r, p);
    if (s.value > best.value) best = s;
  }
  return best;
}

inline std::vector<double> linear_rate_grid(double step, double max) {
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::llround(max / step));
  for (std::size_t k = 1; k <= n; ++k) g.push_back(step * static_cast<double>(k));
  return g;
}

}  // namespace arqsec
