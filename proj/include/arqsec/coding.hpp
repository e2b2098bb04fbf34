#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "arqsec/error.hpp"
#include "arqsec/fading.hpp"
#include "arqsec/random.hpp"
#include "arqsec/rates.hpp"
#include "arqsec/stats.hpp"

namespace arqsec {

struct DistillConfig {
  unsigned k = 1;
  double r0 = 1.0;
  double p = 1.0;
  double rc = 0.0;
  std::size_t frame_bits = 240;

  void validate() const {
    detail::require(k >= 1, "distill: k must be >= 1");
    detail::require(frame_bits >= 1, "distill: frame_bits must be >= 1");
    detail::require(r0 >= 0.0 && rc >= 0.0, "distill: rates must be >= 0");
    if (!(p > 0.0)) throw DomainError("distill: P must be positive");
  }
};

// Per-frame decoding probability given (rate, SNR, power gain).
using FrameSuccessFn = std::function<double(double rate, double snr, double gain)>;

/// Frame errors at Bob and at genie-aided Eve. Eve decodes at the effective
/// rate R0 - Rc, so CapacityThreshold erases at Eve iff R0 - Rc > log2(1 + h_e P).
struct FrameErrorModel {
  enum class Kind { CapacityThreshold, Custom };
  Kind kind = Kind::CapacityThreshold;
  FrameSuccessFn success;

  static FrameErrorModel capacity_threshold() { return {}; }
  static FrameErrorModel custom(FrameSuccessFn fn) { return {Kind::Custom, std::move(fn)}; }

  bool decodes(double rate, double snr, double gain, Rng& rng) const {
    if (kind == Kind::CapacityThreshold) return rate <= block_capacity(gain, snr);
    const double q = success(rate, snr, gain);
    return rng.bernoulli(q);
  }

  bool bob_decodes(const DistillConfig& c, double h_b, Rng& rng) const {
    return decodes(c.r0, c.p, h_b, rng);
  }
  bool eve_decodes(const DistillConfig& c, double h_e, Rng& rng) const {
    return decodes(std::max(0.0, c.r0 - c.rc), c.p, h_e, rng);
  }
};

/// Probability that Eve decodes all k key parts over i.i.d. Rayleigh(1) gains:
/// exp(-(k/P)(2^{R0-Rc} - 1)), and 1 once Rc >= R0.
inline double outage_prob_closed_form(const DistillConfig& c) {
  c.validate();
  if (c.rc >= c.r0) return 1.0;
  return std::exp(-(static_cast<double>(c.k) / c.p) * std::expm1((c.r0 - c.rc) * std::numbers::ln2));
}

/// Monte Carlo outage for an arbitrary Eve gain marginal:
/// Pr(min_j log2(1 + h_e(j) P) >= R0 - Rc).
inline MeanEstimate outage_prob_mc(const DistillConfig& c, const Marginal& he, std::size_t trials,
                                   Rng& rng) {
  c.validate();
  detail::require(trials >= 1000, "outage_prob_mc: need at least 1000 trials");
  const double rate = std::max(0.0, c.r0 - c.rc);
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    bool all = true;
    for (unsigned j = 0; j < c.k; ++j)
      if (rate > block_capacity(he(rng), c.p)) all = false;
    hits += all;
  }
  return proportion(hits, trials);
}

/// Average number of Bernoulli trials to collect k ACKed frames:
/// N0 = k exp((2^{R0} - 1)/P).
inline double expected_transmissions(const DistillConfig& c) {
  c.validate();
  return static_cast<double>(c.k) * std::exp(detail::success_exponent(c.r0, c.p));
}

/// R_k = R0 / N0 = (R0/k) exp(-(2^{R0} - 1)/P).
inline double key_rate_delay_limited(const DistillConfig& c) {
  c.validate();
  return c.r0 / static_cast<double>(c.k) * std::exp(-detail::success_exponent(c.r0, c.p));
}

/// Fixed-length bit string packed into 64-bit words, low bit first.
class KeyBits {
 public:
  KeyBits() = default;
  explicit KeyBits(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  static KeyBits random(std::size_t bits, Rng& rng) {
    KeyBits k(bits);
    for (auto& w : k.words_) w = rng();
    k.mask_tail();
    return k;
  }

  // "101" -> bits 1, 0, 1 in order.
  static KeyBits from_string(const std::string& s) {
    KeyBits k(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != '0' && s[i] != '1') throw InputError("KeyBits: expected only '0' and '1'");
      if (s[i] == '1') k.words_[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    return k;
  }

  std::size_t size() const { return bits_; }
  bool bit(std::size_t i) const { return (words_.at(i / 64) >> (i % 64)) & 1U; }
  bool is_zero() const {
    return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
  }

  std::string to_string() const {
    std::string s(bits_, '0');
    for (std::size_t i = 0; i < bits_; ++i)
      if (bit(i)) s[i] = '1';
    return s;
  }

  KeyBits& operator^=(const KeyBits& o) {
    if (o.bits_ != bits_) throw InputError("KeyBits: length mismatch");
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] ^= o.words_[i];
    return *this;
  }

  friend bool operator==(const KeyBits&, const KeyBits&) = default;

 private:
  void mask_tail() {
    if (bits_ % 64 != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << (bits_ % 64)) - 1;
  }

  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Modulo-2 sum of the key parts.
inline KeyBits distill_key(const std::vector<KeyBits>& parts) {
  if (parts.empty()) throw InputError("distill_key: no key parts");
  KeyBits out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    if (parts[i].size() != out.size()) throw InputError("distill_key: key parts differ in length");
    out ^= parts[i];
  }
  return out;
}

struct DistillOptions {
  Marginal bob = exponential_marginal(1.0);
  Marginal eve = exponential_marginal(1.0);
  std::size_t max_frames_per_episode = 100'000'000;
};

struct DistillResult {
  MeanEstimate outage;
  MeanEstimate key_rate;  // key bits per channel use over all episodes
  double mean_frames = 0.0;
  std::size_t episodes = 0;
  std::size_t key_mismatches = 0;  // Alice/Bob keys differing; 0 by construction
};

/// Full episodes: Alice sends fresh uniform parts until k are ACKed; Eve sees
/// every transmitted frame; the key is the XOR of the ACKed parts. Outage is
/// Eve decoding all k ACKed parts. The key rate pools R0 per episode over the
/// total frame count.
inline DistillResult simulate_distillation(const DistillConfig& c, const FrameErrorModel& fem,
                                           std::size_t episodes, Rng& rng,
                                           const DistillOptions& opt = {}) {
  c.validate();
  detail::require(episodes >= 1000, "simulate_distillation: need at least 1000 episodes");
  if (fem.kind == FrameErrorModel::Kind::Custom)
    detail::require(static_cast<bool>(fem.success), "simulate_distillation: custom model has no callback");
  Rng chan = rng.split(1);
  Rng bits = rng.split(2);
  Rng coin = rng.split(3);

  DistillResult res;
  res.episodes = episodes;
  std::size_t outages = 0;
  RunningStats frames;
  std::vector<KeyBits> alice_parts;
  std::vector<KeyBits> bob_parts;
  for (std::size_t e = 0; e < episodes; ++e) {
    alice_parts.clear();
    bob_parts.clear();
    std::size_t sent = 0;
    bool eve_all = true;
    while (alice_parts.size() < c.k) {
      if (++sent > opt.max_frames_per_episode)
        throw std::runtime_error("simulate_distillation: frame budget exhausted");
      const double hb = opt.bob(chan);
      const double he = opt.eve(chan);
      KeyBits part = KeyBits::random(c.frame_bits, bits);
      const bool acked = fem.bob_decodes(c, hb, coin);
      const bool eve_ok = fem.eve_decodes(c, he, coin);
      if (!acked) continue;
      eve_all = eve_all && eve_ok;
      bob_parts.push_back(part);
      alice_parts.push_back(std::move(part));
    }
    if (!(distill_key(alice_parts) == distill_key(bob_parts))) ++res.key_mismatches;
    outages += eve_all;
    frames.add(static_cast<double>(sent));
  }
  res.outage = proportion(outages, episodes);
  res.mean_frames = frames.mean();
  // Ratio estimator R0 / mean(frames), delta-method error.
  const double m = frames.mean();
  res.key_rate.mean = c.r0 / m;
  res.key_rate.std_err = c.r0 * frames.std_err() / (m * m);
  res.key_rate.n = episodes;
  return res;
}

struct TradeoffPoint {
  double r0 = 0.0;
  double p_out = 0.0;
  double r_k = 0.0;
};

inline std::vector<TradeoffPoint> tradeoff_sweep(DistillConfig base, const std::vector<double>& r0s) {
  std::vector<TradeoffPoint> out;
  out.reserve(r0s.size());
  for (double r : r0s) {
    base.r0 = r;
    out.push_back({r, outage_prob_closed_form(base), key_rate_delay_limited(base)});
  }
  return out;
}

/// Points not dominated in (lower P_out, higher R_k), sorted by P_out.
inline std::vector<TradeoffPoint> pareto_frontier(std::vector<TradeoffPoint> pts) {
  std::sort(pts.begin(), pts.end(), [](const TradeoffPoint& a, const TradeoffPoint& b) {
    return a.p_out != b.p_out ? a.p_out < b.p_out : a.r_k > b.r_k;
  });
  std::vector<TradeoffPoint> front;
  double best_rk = -1.0;
  for (const auto& q : pts) {
    if (q.r_k > best_rk) {
      front.push_back(q);
      best_rk = q.r_k;
    }
  }
  return front;
}

}  // namespace arqsec
