#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "arqsec/error.hpp"
#include "arqsec/random.hpp"

namespace arqsec {

/// Fixed-width security parameter (IV / TSC / PN analogue).
struct VWord {
  std::uint64_t bits = 0;
  unsigned width = 48;

  static std::uint64_t mask(unsigned width) {
    return width >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << width) - 1;
  }
  static VWord zero(unsigned width) { return make(0, width); }
  static VWord make(std::uint64_t bits, unsigned width) {
    if (width < 1 || width > 64) throw ConfigError("VWord: width must lie in [1, 64]");
    return {bits & mask(width), width};
  }
  static VWord random(unsigned width, Rng& rng) { return make(rng.bits(width), width); }

  VWord operator^(const VWord& o) const {
    if (o.width != width) throw InputError("VWord: width mismatch");
    return {bits ^ o.bits, width};
  }
  VWord& operator^=(const VWord& o) { return *this = *this ^ o; }
  friend bool operator==(const VWord&, const VWord&) = default;

  // Fixed-width lowercase hex, ceil(width/4) digits.
  std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    const unsigned n = (width + 3) / 4;
    std::string s(n, '0');
    std::uint64_t v = bits;
    for (unsigned i = 0; i < n; ++i) {
      s[n - 1 - i] = digits[v & 0xF];
      v >>= 4;
    }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Unicast V evolution

struct SenderVState {
  VWord v_e;
  VWord last_v_h;
  bool last_q = true;  // status of frame i-1; V_h(0) = 0 makes it moot at start

  static SenderVState initial(const VWord& v0) { return {v0, VWord::zero(v0.width), true}; }
};

struct SenderStep {
  VWord v_h;
  VWord v_e;
};

/// Draws V_h(i) != V_h(i-1) and advances
/// V_e(i) = V_h(i) ^ V_e(i-1) [^ V_h(i-1) if frame i-1 was not ACKed].
inline SenderStep sender_next(SenderVState& s, Rng& rng) {
  VWord vh = VWord::random(s.v_e.width, rng);
  for (int tries = 1; vh == s.last_v_h && tries < 64; ++tries) vh = VWord::random(s.v_e.width, rng);
  if (vh == s.last_v_h) vh.bits ^= 1;
  VWord ve = vh ^ s.v_e;
  if (!s.last_q) ve ^= s.last_v_h;
  s.v_e = ve;
  s.last_v_h = vh;
  return {vh, ve};
}

inline void sender_record_status(SenderVState& s, bool acked) { s.last_q = acked; }

struct ReceiverVState {
  VWord v_d;
  VWord last_v_h;
  bool alarmed = false;

  static ReceiverVState initial(const VWord& v0) { return {v0, VWord::zero(v0.width), false}; }
};

enum class DecapOutcome { Accepted, ReplayDiscard, AttackAlarm };

inline const char* to_string(DecapOutcome o) {
  switch (o) {
    case DecapOutcome::Accepted: return "accepted";
    case DecapOutcome::ReplayDiscard: return "replay_discard";
    case DecapOutcome::AttackAlarm: return "attack_alarm";
  }
  return "?";
}

struct DecapResult {
  DecapOutcome outcome = DecapOutcome::AttackAlarm;
  VWord v_d;
  int attempts = 0;
};

using DecryptCheck = std::function<bool(const VWord&)>;

/// Receiver side of the update: a header equal to the last accepted one is a
/// replay; otherwise try V_h ^ V_d, then V_h ^ V_d ^ last V_h (lost ACK); a
/// second failure raises the alarm and freezes the state.
inline DecapResult receiver_decap(ReceiverVState& s, const VWord& v_h, const DecryptCheck& check) {
  if (s.alarmed) return {DecapOutcome::AttackAlarm, s.v_d, 0};
  if (v_h == s.last_v_h) return {DecapOutcome::ReplayDiscard, s.v_d, 0};
  const VWord first = v_h ^ s.v_d;
  if (check(first)) {
    s.v_d = first;
    s.last_v_h = v_h;
    return {DecapOutcome::Accepted, first, 1};
  }
  const VWord second = first ^ s.last_v_h;
  if (check(second)) {
    s.v_d = second;
    s.last_v_h = v_h;
    return {DecapOutcome::Accepted, second, 2};
  }
  s.alarmed = true;
  return {DecapOutcome::AttackAlarm, s.v_d, 2};
}

/// Idealized encapsulation: a ciphertext remembers the V it was built with and
/// the integrity check passes iff the candidate matches, or with a configurable
/// false-accept probability (CRC collision model).
struct IdealCipher {
  double false_accept = 0.0;

  bool check(const VWord& used, const VWord& candidate, Rng& coin) const {
    if (candidate == used) return true;
    return false_accept > 0.0 && coin.bernoulli(false_accept);
  }
};

struct HonestLinkResult {
  std::size_t accepted = 0;
  std::size_t desync = 0;  // accepted with V_d != V_e
  std::size_t alarms = 0;
  std::size_t replay_discards = 0;
  std::size_t second_attempts = 0;
};

/// Honest unicast run over given delivery patterns (no attacker): frame i
/// reaches Bob iff data[i], and its ACK (sent only on acceptance) reaches
/// Alice iff ack[i].
inline HonestLinkResult run_honest_link(const VWord& v0, const std::vector<bool>& data,
                                        const std::vector<bool>& ack, Rng& rng) {
  if (data.size() != ack.size()) throw InputError("run_honest_link: pattern length mismatch");
  SenderVState tx = SenderVState::initial(v0);
  ReceiverVState rx = ReceiverVState::initial(v0);
  HonestLinkResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SenderStep st = sender_next(tx, rng);
    bool q = false;
    if (data[i]) {
      const DecapResult d = receiver_decap(rx, st.v_h, [&](const VWord& c) { return c == st.v_e; });
      switch (d.outcome) {
        case DecapOutcome::Accepted:
          ++r.accepted;
          if (!(d.v_d == st.v_e)) ++r.desync;
          if (d.attempts == 2) ++r.second_attempts;
          q = ack[i];
          break;
        case DecapOutcome::ReplayDiscard: ++r.replay_discards; break;
        case DecapOutcome::AttackAlarm: ++r.alarms; return r;
      }
    }
    sender_record_status(tx, q);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Initialization handshake

enum class InitRole { Initiator, Responder };

struct InitFrame {
  std::uint32_t seq = 0;
  VWord value;
};

struct InitEvent {
  enum class Type { Start, FrameReceived, Timeout };
  Type type = Type::Start;
  InitFrame frame;

  static InitEvent start() { return {Type::Start, {}}; }
  static InitEvent received(std::uint32_t seq, const VWord& v) { return {Type::FrameReceived, {seq, v}}; }
  static InitEvent timeout() { return {Type::Timeout, {}}; }
};

// At most one of `send` and `done` is meaningful for the initiator; the
// responder both replies and reports its current V0 on the final pair.
struct InitAction {
  std::optional<InitFrame> send;
  std::optional<VWord> done;
  bool violation = false;
};

struct InitState {
  InitRole role = InitRole::Initiator;
  std::map<std::uint32_t, VWord> stored;  // last value per sequence number
  std::uint32_t next_seq = 1;
  std::size_t n_target = 2;
  unsigned width = 48;
  std::optional<InitFrame> pending;  // initiator: frame awaiting its reply
  std::uint32_t last_seq = 0;        // responder: last sequence number replied to
  bool finished = false;
  std::size_t violations = 0;

  static InitState make(InitRole role, std::size_t n_target, unsigned width) {
    detail::require(n_target >= 2, "init: need at least two initialization frames");
    InitState s;
    s.role = role;
    s.n_target = n_target;
    s.width = width;
    return s;
  }

  VWord v0() const {
    VWord v = VWord::zero(width);
    for (const auto& [seq, w] : stored) v ^= w;
    return v;
  }
};

inline InitAction init_step(InitState& s, const InitEvent& ev, Rng& rng) {
  InitAction act;
  auto violation = [&] {
    ++s.violations;
    act.violation = true;
    return act;
  };

  if (s.role == InitRole::Initiator) {
    switch (ev.type) {
      case InitEvent::Type::Start:
      case InitEvent::Type::Timeout:
        if (s.finished) return act;
        // A timeout discards the unanswered value; the same sequence number
        // goes out again with a fresh one.
        s.pending = InitFrame{s.next_seq, VWord::random(s.width, rng)};
        act.send = s.pending;
        return act;
      case InitEvent::Type::FrameReceived: {
        if (s.finished || !s.pending || ev.frame.seq != s.pending->seq + 1) return violation();
        s.stored[s.pending->seq] = s.pending->value;
        s.stored[ev.frame.seq] = ev.frame.value;
        s.pending.reset();
        if (s.stored.size() >= s.n_target) {
          s.finished = true;
          act.done = s.v0();
          return act;
        }
        s.next_seq = ev.frame.seq + 1;
        s.pending = InitFrame{s.next_seq, VWord::random(s.width, rng)};
        act.send = s.pending;
        return act;
      }
    }
    return act;
  }

  if (ev.type != InitEvent::Type::FrameReceived) return act;
  const std::uint32_t seq = ev.frame.seq;
  const bool fresh = seq == s.last_seq + 2 || (s.last_seq == 0 && seq == 1);
  const bool retry = s.last_seq != 0 && seq == s.last_seq;
  if (seq % 2 == 0 || !(fresh || retry)) return violation();
  s.last_seq = seq;
  s.stored[seq] = ev.frame.value;
  const InitFrame reply{seq + 1, VWord::random(s.width, rng)};
  s.stored[reply.seq] = reply.value;
  act.send = reply;
  if (s.stored.size() >= s.n_target) {
    s.finished = true;
    act.done = s.v0();
  }
  return act;
}

/// Probability that Eve captures every stored initialization frame:
/// prod (1 - gamma_AE) * prod (1 - gamma_BE).
inline double p0_closed_form(std::span<const double> gamma_ae, std::span<const double> gamma_be) {
  double p = 1.0;
  for (double g : gamma_ae) {
    detail::require(g >= 0.0 && g <= 1.0, "p0: probabilities must lie in [0, 1]");
    p *= 1.0 - g;
  }
  for (double g : gamma_be) {
    detail::require(g >= 0.0 && g <= 1.0, "p0: probabilities must lie in [0, 1]");
    p *= 1.0 - g;
  }
  return p;
}

/// (q^{n+1} - q^{N+1}) / gamma with q = 1 - gamma: the expected number of
/// useful frames under homogeneous losses.
inline double expected_useful_bound(double gamma_e, std::size_t n, std::size_t n_session) {
  if (!(gamma_e > 0.0)) throw DomainError("expected_useful_bound: gamma must be positive (cap is N - n)");
  detail::require(gamma_e <= 1.0, "expected_useful_bound: gamma must be <= 1");
  detail::require(n >= 1 && n_session >= n, "expected_useful_bound: need 1 <= n <= N");
  const double q = 1.0 - gamma_e;
  return (std::pow(q, static_cast<double>(n + 1)) - std::pow(q, static_cast<double>(n_session + 1))) /
         gamma_e;
}

// ---------------------------------------------------------------------------
// Multicast

struct GroupVState {
  VWord v_g;
  std::uint32_t vg_id = 0;
  std::set<std::uint32_t> members;
  std::set<std::uint32_t> members_acked;
  std::unordered_set<std::uint64_t> used_v_h;

  bool ready() const { return members_acked == members; }
  void ack(std::uint32_t member) {
    if (members.count(member) != 0) members_acked.insert(member);
  }
};

struct MulticastStep {
  VWord v_h;
  VWord v_eg;
  std::uint32_t vg_id = 0;
};

/// V_eg(i) = V_h(i) ^ V_g with V_h fresh within the lifetime of V_g.
inline MulticastStep multicast_encap(GroupVState& g, Rng& rng) {
  if (!g.ready()) throw NotReadyError("multicast_encap: not every member has acknowledged V_g");
  const unsigned w = g.v_g.width;
  const double space = std::ldexp(1.0, static_cast<int>(w));
  if (static_cast<double>(g.used_v_h.size()) >= space)
    throw NotReadyError("multicast_encap: header space exhausted for this V_g");
  VWord vh = VWord::random(w, rng);
  while (g.used_v_h.count(vh.bits) != 0) vh = VWord::random(w, rng);
  g.used_v_h.insert(vh.bits);
  return {vh, vh ^ g.v_g, g.vg_id};
}

struct GroupReceiver {
  VWord v_g;
  std::uint32_t vg_id = 0;
  std::unordered_set<std::uint64_t> seen;
};

/// Member side: a repeated header or unknown group id is an attack sign.
inline DecapResult group_decap(GroupReceiver& r, std::uint32_t vg_id, const VWord& v_h,
                               const DecryptCheck& check) {
  if (vg_id != r.vg_id || r.seen.count(v_h.bits) != 0) return {DecapOutcome::AttackAlarm, r.v_g, 0};
  const VWord v_dg = v_h ^ r.v_g;
  if (!check(v_dg)) return {DecapOutcome::AttackAlarm, v_dg, 1};
  r.seen.insert(v_h.bits);
  return {DecapOutcome::Accepted, v_dg, 1};
}

// ---------------------------------------------------------------------------
// Eavesdropper bookkeeping

/// Online version of Eve's usefulness rule: V0 needs every stored init frame;
/// afterwards a data frame is useful iff she captured it and every earlier
/// ACKed data frame together with its ACK.
class EveTracker {
 public:
  void init_frame(std::uint32_t seq, bool captured) { init_[seq] = captured; }

  void init_done(std::size_t stored) {
    v0_known_ = true;
    for (std::uint32_t s = 1; s <= stored; ++s) {
      const auto it = init_.find(s);
      if (it == init_.end() || !it->second) v0_known_ = false;
    }
    init_.clear();
  }

  // Returns whether the frame was useful.
  bool data_frame(bool captured) {
    const bool useful = v0_known_ && chain_ok_ && captured;
    u_ += useful;
    return useful;
  }

  void data_status(bool acked, bool data_captured, bool ack_tracked) {
    if (acked && !(data_captured && ack_tracked)) chain_ok_ = false;
  }

  bool v0_known() const { return v0_known_; }
  bool blind() const { return !(v0_known_ && chain_ok_); }
  std::size_t useful() const { return u_; }

 private:
  std::map<std::uint32_t, bool> init_;
  bool v0_known_ = false;
  bool chain_ok_ = true;
  std::size_t u_ = 0;
};

}  // namespace arqsec
