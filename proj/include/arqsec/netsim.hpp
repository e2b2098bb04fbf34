#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "arqsec/crown.hpp"
#include "arqsec/error.hpp"
#include "arqsec/fading.hpp"
#include "arqsec/random.hpp"
#include "arqsec/rates.hpp"
#include "arqsec/trace.hpp"

namespace arqsec {

/// Loss process of one directed pair. Bernoulli drops frames with
/// loss_prob_data; FromChannel drops a frame iff R0 > log2(1 + h P), with h
/// the Bob (or Eve) gain of a fresh block from the fading model. ACK losses
/// are always Bernoulli.
struct LinkModel {
  enum class Mode { Bernoulli, FromChannel };
  Mode mode = Mode::Bernoulli;
  double loss_prob_data = 0.0;
  double loss_prob_ack = 0.0;
  FadingModel fading = FadingModel::rayleigh();
  double r0 = 1.0;
  double snr = 1.0;
  bool eve_gain = false;

  static LinkModel bernoulli(double data, double ack = 0.0) {
    LinkModel l;
    l.loss_prob_data = data;
    l.loss_prob_ack = ack;
    return l;
  }
  static LinkModel from_channel(FadingModel model, double r0, double snr, bool eve_gain = false,
                                double ack = 0.0) {
    LinkModel l;
    l.mode = Mode::FromChannel;
    l.fading = std::move(model);
    l.r0 = r0;
    l.snr = snr;
    l.eve_gain = eve_gain;
    l.loss_prob_ack = ack;
    return l;
  }

  void validate(const std::string& name) const {
    detail::require(loss_prob_data >= 0.0 && loss_prob_data <= 1.0, name + ": data loss must lie in [0, 1]");
    detail::require(loss_prob_ack >= 0.0 && loss_prob_ack <= 1.0, name + ": ack loss must lie in [0, 1]");
    if (mode == Mode::FromChannel) {
      fading.validate();
      detail::require(r0 >= 0.0 && snr > 0.0, name + ": channel mode needs R0 >= 0 and SNR > 0");
    }
  }

  bool deliver_data(Rng& rng) const {
    if (mode == Mode::Bernoulli) return !rng.bernoulli(loss_prob_data);
    const ChannelDraw d = sample(fading, rng);
    return r0 <= block_capacity(eve_gain ? d.h_e : d.h_b, snr);
  }
  bool deliver_ack(Rng& rng) const { return !rng.bernoulli(loss_prob_ack); }
};

/// alice_bob: data = gamma_AB, ack = gamma_BA (also carries Bob's init
/// replies). alice_eve: Alice's frames at Eve. bob_eve: data = Bob's init
/// replies at Eve, ack = Eve's ACK tracking (0 = perfect).
struct Links {
  LinkModel alice_bob;
  LinkModel alice_eve;
  LinkModel bob_eve;

  static Links homogeneous(double gamma_ab, double gamma_ba, double gamma_e) {
    return {LinkModel::bernoulli(gamma_ab, gamma_ba), LinkModel::bernoulli(gamma_e),
            LinkModel::bernoulli(gamma_e)};
  }
};

struct AttackAction {
  enum class Type { InjectData, ReplayFrame, InjectAck, PassiveOnly };
  std::size_t at = 1;  // data-frame index; the action precedes honest frame `at`
  Type type = Type::PassiveOnly;
  std::optional<VWord> v_h;  // InjectData header; random when absent
  std::size_t ref = 0;       // ReplayFrame: earlier data-frame index

  static AttackAction inject(std::size_t at, std::optional<VWord> v_h = std::nullopt) {
    return {at, Type::InjectData, v_h, 0};
  }
  static AttackAction replay(std::size_t at, std::size_t ref) { return {at, Type::ReplayFrame, {}, ref}; }
  static AttackAction inject_ack(std::size_t at) { return {at, Type::InjectAck, {}, 0}; }
};

inline const char* to_string(AttackAction::Type t) {
  switch (t) {
    case AttackAction::Type::InjectData: return "inject";
    case AttackAction::Type::ReplayFrame: return "replay";
    case AttackAction::Type::InjectAck: return "inject_ack";
    case AttackAction::Type::PassiveOnly: return "passive";
  }
  return "?";
}

struct AttackerScript {
  std::vector<AttackAction> actions;

  void validate(std::size_t n_data) const {
    for (const auto& a : actions) {
      if (a.type == AttackAction::Type::PassiveOnly) continue;
      if (a.at < 1 || a.at > n_data + 1)
        throw ScriptError("attacker: action time " + std::to_string(a.at) + " outside the session");
      if (a.type == AttackAction::Type::ReplayFrame && (a.ref < 1 || a.ref >= a.at))
        throw ScriptError("attacker: replay at " + std::to_string(a.at) + " references frame " +
                          std::to_string(a.ref) + " which has not been sent yet");
    }
  }
};

struct MulticastConfig {
  std::uint32_t clients = 0;  // members besides Alice
  std::size_t frames = 0;
  double client_loss = 0.0;
  std::size_t max_vg_attempts = 10'000;
};

struct SessionConfig {
  unsigned width = 48;
  std::size_t n_init = 10;
  std::size_t n_data = 100;
  std::uint32_t payload_len = 1500;
  Links links;
  AttackerScript attacker;
  double false_accept = 0.0;
  MulticastConfig multicast;
  std::size_t max_init_transmissions = 1'000'000;
  bool record_trace = false;

  void validate() const {
    detail::require(width >= 1 && width <= 64, "session: width must lie in [1, 64]");
    detail::require(n_init >= 2, "session: n_init must be >= 2");
    links.alice_bob.validate("alice_bob");
    links.alice_eve.validate("alice_eve");
    links.bob_eve.validate("bob_eve");
    detail::require(false_accept >= 0.0 && false_accept <= 1.0, "session: false_accept must lie in [0, 1]");
    detail::require(multicast.client_loss >= 0.0 && multicast.client_loss < 1.0,
                    "session: multicast client loss must lie in [0, 1)");
    attacker.validate(n_data);
  }
};

struct SessionMetrics {
  // initialization
  std::size_t init_transmissions = 0;
  std::size_t init_timeouts = 0;
  std::size_t init_violations = 0;
  bool v0_agree = false;
  bool v0_recovered = false;  // Eve holds V0
  // unicast data
  std::size_t data_sent = 0;
  std::size_t accepted = 0;
  std::size_t second_attempts = 0;
  std::size_t honest_replay_discards = 0;
  std::size_t desync = 0;
  std::size_t alarms = 0;
  bool halted = false;
  std::size_t halted_at = 0;
  // attacker
  std::size_t attack_frames = 0;
  std::size_t attack_detected = 0;
  std::size_t attack_undetected = 0;
  std::size_t attack_skipped = 0;
  // eavesdropper
  std::size_t useful = 0;
  bool blind = true;
  // multicast
  std::size_t vg_attempts = 0;
  std::size_t mcast_sent = 0;
  std::size_t mcast_accepted = 0;
  std::size_t mcast_alarms = 0;
};

struct SessionResult {
  SessionTrace trace;
  SessionMetrics metrics;
  VWord v0;
};

namespace detail {

// Disjoint streams so that, e.g., adding or changing Eve's links never moves
// the Alice-Bob outcomes.
enum Stream : std::uint64_t {
  kAliceRandom = 1,
  kBobRandom,
  kLinkAB,
  kLinkBA,
  kLinkAE,
  kLinkBE,
  kAttacker,
  kFalseAccept,
  kMulticast,
  kBobAckTracking,
};

}  // namespace detail

/// One session: initialization, n_data unicast frames (each followed by its
/// ACK on acceptance), optional multicast. Alarms halt the session.
inline SessionResult run_session(const SessionConfig& cfg, const Rng& seed) {
  cfg.validate();
  Rng alice_rng = seed.split(detail::kAliceRandom);
  Rng bob_rng = seed.split(detail::kBobRandom);
  Rng ab = seed.split(detail::kLinkAB);
  Rng ba = seed.split(detail::kLinkBA);
  Rng ae = seed.split(detail::kLinkAE);
  Rng be = seed.split(detail::kLinkBE);
  Rng atk = seed.split(detail::kAttacker);
  Rng coin = seed.split(detail::kFalseAccept);
  Rng mc = seed.split(detail::kMulticast);
  Rng eve_ack = seed.split(detail::kBobAckTracking);

  SessionResult res;
  SessionMetrics& m = res.metrics;
  std::uint64_t t = 0;
  auto record = [&](TraceEvent e) {
    e.t = t++;
    if (cfg.record_trace) res.trace.events.push_back(std::move(e));
  };

  // -- initialization -------------------------------------------------------
  EveTracker eve;
  InitState alice = InitState::make(InitRole::Initiator, cfg.n_init, cfg.width);
  InitState bob = InitState::make(InitRole::Responder, cfg.n_init, cfg.width);
  VWord bob_v0 = VWord::zero(cfg.width);
  InitAction act = init_step(alice, InitEvent::start(), alice_rng);
  while (!alice.finished) {
    if (!act.send) throw std::logic_error("init: initiator has nothing to send");
    if (++m.init_transmissions > cfg.max_init_transmissions)
      throw std::runtime_error("init: transmission budget exhausted");
    const InitFrame f = *act.send;
    const bool to_bob = cfg.links.alice_bob.deliver_data(ab);
    const bool to_eve = cfg.links.alice_eve.deliver_data(ae);
    record({0, "alice", FrameKind::Init, f.seq, f.value, {}, 0, {{"bob", to_bob}, {"eve", to_eve}}, {}});
    eve.init_frame(f.seq, to_eve);
    bool answered = false;
    if (to_bob) {
      const InitAction reply = init_step(bob, InitEvent::received(f.seq, f.value), bob_rng);
      if (reply.done) bob_v0 = *reply.done;
      if (reply.send) {
        const InitFrame r = *reply.send;
        ++m.init_transmissions;
        const bool to_alice = cfg.links.alice_bob.deliver_ack(ba);
        const bool r_eve = cfg.links.bob_eve.deliver_data(be);
        record({0, "bob", FrameKind::Init, r.seq, r.value, {}, 0, {{"alice", to_alice}, {"eve", r_eve}}, {}});
        eve.init_frame(r.seq, r_eve);
        if (to_alice) {
          act = init_step(alice, InitEvent::received(r.seq, r.value), alice_rng);
          answered = !act.violation;
        }
      }
    }
    if (!answered && !alice.finished) {
      ++m.init_timeouts;
      act = init_step(alice, InitEvent::timeout(), alice_rng);
    }
  }
  m.init_violations = alice.violations + bob.violations;
  res.v0 = alice.v0();
  m.v0_agree = res.v0 == bob_v0;
  eve.init_done(alice.stored.size());
  m.v0_recovered = eve.v0_known();

  // -- unicast data ---------------------------------------------------------
  std::multimap<std::size_t, AttackAction> script;
  std::set<std::size_t> replay_refs;
  for (const auto& a : cfg.attacker.actions) {
    if (a.type == AttackAction::Type::PassiveOnly) continue;
    script.emplace(a.at, a);
    if (a.type == AttackAction::Type::ReplayFrame) replay_refs.insert(a.ref);
  }
  struct Captured {
    VWord v_h;
    VWord v_e;
    bool eve_has = false;
  };
  std::map<std::size_t, Captured> captured;

  SenderVState tx = SenderVState::initial(res.v0);
  ReceiverVState rx = ReceiverVState::initial(bob_v0);
  const IdealCipher cipher{cfg.false_accept};

  auto halt = [&](std::size_t at) {
    m.halted = true;
    m.halted_at = at;
  };

  auto attack_frame = [&](std::size_t i, const VWord& v_h, const VWord& used) {
    ++m.attack_frames;
    const DecapResult d =
        receiver_decap(rx, v_h, [&](const VWord& c) { return cipher.check(used, c, coin); });
    record({0, "eve", FrameKind::Data, static_cast<std::uint32_t>(i), v_h, {}, cfg.payload_len,
            {{"bob", true}}, to_string(d.outcome)});
    if (d.outcome == DecapOutcome::Accepted) {
      ++m.attack_undetected;
    } else {
      ++m.attack_detected;
      if (d.outcome == DecapOutcome::AttackAlarm) {
        ++m.alarms;
        halt(i);
      }
    }
  };

  for (std::size_t i = 1; i <= cfg.n_data && !m.halted; ++i) {
    bool forced_ack = false;
    for (auto [it, end] = script.equal_range(i); it != end && !m.halted; ++it) {
      const AttackAction& a = it->second;
      switch (a.type) {
        case AttackAction::Type::InjectData: {
          const VWord vh = a.v_h ? VWord::make(a.v_h->bits, cfg.width) : VWord::random(cfg.width, atk);
          attack_frame(i, vh, VWord::random(cfg.width, atk));
          break;
        }
        case AttackAction::Type::ReplayFrame: {
          const auto c = captured.find(a.ref);
          if (c == captured.end() || !c->second.eve_has) {
            ++m.attack_skipped;
            break;
          }
          attack_frame(i, c->second.v_h, c->second.v_e);
          break;
        }
        case AttackAction::Type::InjectAck: forced_ack = true; break;
        case AttackAction::Type::PassiveOnly: break;
      }
    }
    if (m.halted) break;

    const SenderStep st = sender_next(tx, alice_rng);
    ++m.data_sent;
    const bool to_bob = cfg.links.alice_bob.deliver_data(ab);
    const bool to_eve = cfg.links.alice_eve.deliver_data(ae);
    if (replay_refs.count(i) != 0) captured[i] = {st.v_h, st.v_e, to_eve};

    std::string outcome = "lost";
    bool ack_alice = false;
    bool ack_eve = false;
    bool ack_sent = false;
    if (to_bob) {
      const DecapResult d =
          receiver_decap(rx, st.v_h, [&](const VWord& c) { return cipher.check(st.v_e, c, coin); });
      outcome = to_string(d.outcome);
      switch (d.outcome) {
        case DecapOutcome::Accepted:
          ++m.accepted;
          if (d.attempts == 2) ++m.second_attempts;
          if (!(d.v_d == st.v_e)) ++m.desync;
          ack_sent = true;
          ack_alice = cfg.links.alice_bob.deliver_ack(ba);
          ack_eve = cfg.links.bob_eve.deliver_ack(eve_ack);
          break;
        case DecapOutcome::ReplayDiscard: ++m.honest_replay_discards; break;
        case DecapOutcome::AttackAlarm:
          ++m.alarms;
          halt(i);
          break;
      }
    }
    record({0, "alice", FrameKind::Data, static_cast<std::uint32_t>(i), st.v_h, {}, cfg.payload_len,
            {{"bob", to_bob}, {"eve", to_eve}}, outcome});
    if (ack_sent)
      record({0, "bob", FrameKind::Ack, static_cast<std::uint32_t>(i), {}, {}, 0,
              {{"alice", ack_alice}, {"eve", ack_eve}}, {}});
    if (forced_ack)
      record({0, "eve", FrameKind::Ack, static_cast<std::uint32_t>(i), {}, {}, 0, {{"alice", true}}, {}});

    const bool q = ack_alice || forced_ack;
    sender_record_status(tx, q);
    eve.data_frame(to_eve);
    eve.data_status(q, to_eve, ack_eve || forced_ack);
  }
  m.useful = eve.useful();
  m.blind = eve.blind();

  // -- multicast ------------------------------------------------------------
  const MulticastConfig& mcfg = cfg.multicast;
  if (!m.halted && mcfg.frames > 0) {
    GroupVState group;
    group.v_g = VWord::random(cfg.width, mc);
    group.vg_id = 1;
    std::vector<std::string> names{"alice"};
    for (std::uint32_t c = 1; c <= mcfg.clients; ++c) names.push_back("client" + std::to_string(c));
    for (std::uint32_t id = 0; id < names.size(); ++id) group.members.insert(id);
    // V_g reaches each member over its own unicast link, repeated until ACKed.
    for (std::uint32_t id = 0; id < names.size(); ++id) {
      std::size_t tries = 0;
      do {
        if (++tries > mcfg.max_vg_attempts) throw std::runtime_error("multicast: V_g distribution failed");
        ++m.vg_attempts;
      } while (mc.bernoulli(mcfg.client_loss));
      group.ack(id);
    }
    std::vector<GroupReceiver> rcv(names.size(), GroupReceiver{group.v_g, group.vg_id, {}});
    for (std::size_t f = 0; f < mcfg.frames; ++f) {
      const MulticastStep s = multicast_encap(group, mc);
      ++m.mcast_sent;
      std::vector<std::pair<std::string, bool>> delivered;
      for (std::uint32_t id = 0; id < names.size(); ++id) {
        const bool got = !mc.bernoulli(mcfg.client_loss);
        delivered.emplace_back(names[id], got);
        if (!got) continue;
        const DecapResult d = group_decap(rcv[id], s.vg_id, s.v_h, [&](const VWord& c) { return c == s.v_eg; });
        if (d.outcome == DecapOutcome::Accepted) ++m.mcast_accepted;
        else ++m.mcast_alarms;
      }
      delivered.emplace_back("eve", cfg.links.alice_eve.deliver_data(ae));
      record({0, "bob", FrameKind::Mcast, static_cast<std::uint32_t>(f + 1), s.v_h, s.vg_id,
              cfg.payload_len, std::move(delivered), {}});
    }
  }
  return res;
}

inline SessionResult run_session(const SessionConfig& cfg, std::uint64_t seed) {
  return run_session(cfg, Rng(seed));
}

}  // namespace arqsec
