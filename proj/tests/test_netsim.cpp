#include <cmath>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "arqsec/netsim.hpp"
#include "arqsec/stats.hpp"

using namespace arqsec;

namespace {

SessionConfig lossless(std::size_t n_data = 100, unsigned width = 24) {
  SessionConfig c;
  c.width = width;
  c.n_init = 10;
  c.n_data = n_data;
  c.links = Links::homogeneous(0.0, 0.0, 0.0);
  return c;
}

SessionConfig lossy(std::size_t n_data, std::size_t n_init, double gae) {
  SessionConfig c;
  c.width = 24;
  c.n_init = n_init;
  c.n_data = n_data;
  c.links = Links::homogeneous(0.005, 0.009, gae);
  return c;
}

std::string jsonl(const SessionTrace& t) {
  std::ostringstream os;
  t.write_jsonl(os);
  return os.str();
}

}  // namespace

TEST(Session, LosslessRunIsFullyUsefulToEve) {
  const auto r = run_session(lossless(), 71);
  const auto& m = r.metrics;
  EXPECT_EQ(m.init_transmissions, 10u);
  EXPECT_EQ(m.init_timeouts, 0u);
  EXPECT_TRUE(m.v0_agree);
  EXPECT_TRUE(m.v0_recovered);
  EXPECT_EQ(m.data_sent, 100u);
  EXPECT_EQ(m.accepted, 100u);
  EXPECT_EQ(m.alarms + m.desync, 0u);
  EXPECT_EQ(m.useful, 100u);
  EXPECT_FALSE(m.blind);
}

TEST(Session, InjectionHaltsAtItsFrame) {
  auto c = lossless();
  c.attacker.actions = {AttackAction::inject(50)};
  const auto m = run_session(c, 72).metrics;
  EXPECT_TRUE(m.halted);
  EXPECT_EQ(m.halted_at, 50u);
  EXPECT_EQ(m.accepted, 49u);
  EXPECT_EQ(m.attack_detected, 1u);
  EXPECT_EQ(m.attack_undetected, 0u);
}

TEST(Session, ReplayOfPreviousFrameIsDiscarded) {
  auto c = lossless();
  c.attacker.actions = {AttackAction::replay(50, 49)};
  const auto m = run_session(c, 73).metrics;
  EXPECT_FALSE(m.halted);
  EXPECT_EQ(m.attack_detected, 1u);
  EXPECT_EQ(m.accepted, 100u);
}

TEST(Session, ReplayOfOlderFrameAlarms) {
  auto c = lossless();
  c.attacker.actions = {AttackAction::replay(50, 10)};
  const auto m = run_session(c, 74).metrics;
  EXPECT_TRUE(m.halted);
  EXPECT_EQ(m.alarms, 1u);
}

TEST(Session, ReplayOfUncapturedFrameIsSkipped) {
  auto c = lossless();
  c.links.alice_eve = LinkModel::bernoulli(1.0);
  c.attacker.actions = {AttackAction::replay(50, 10)};
  const auto m = run_session(c, 75).metrics;
  EXPECT_EQ(m.attack_skipped, 1u);
  EXPECT_EQ(m.attack_frames, 0u);
  EXPECT_FALSE(m.halted);
}

TEST(Session, ForgedAckOnLostFrameRaisesAlarmNotDesync) {
  // A forged ACK for a frame Bob never received makes his next
  // decapsulation fail both candidates.
  auto c = lossless();
  c.links.alice_bob = LinkModel::bernoulli(0.0, 0.0);
  c.attacker.actions = {AttackAction::inject_ack(1)};
  auto drop_first = c;
  const auto clean = run_session(c, 76).metrics;
  EXPECT_FALSE(clean.halted);  // ACK forged for a frame Bob did accept
  drop_first.links.alice_bob = LinkModel::bernoulli(0.3, 0.3);
  for (std::size_t i = 2; i <= 100; i += 7) drop_first.attacker.actions.push_back(AttackAction::inject_ack(i));
  const auto m = run_session(drop_first, 76).metrics;
  EXPECT_EQ(m.desync, 0u);
  EXPECT_TRUE(m.halted);
}

TEST(Session, BadScriptsAreRejected) {
  auto c = lossless(20);
  c.attacker.actions = {AttackAction::replay(5, 5)};
  EXPECT_THROW(run_session(c, 1), ScriptError);
  c.attacker.actions = {AttackAction::inject(22)};
  EXPECT_THROW(run_session(c, 1), ScriptError);
  c.attacker.actions = {AttackAction::inject(0)};
  EXPECT_THROW(run_session(c, 1), ScriptError);
  c.attacker.actions = {AttackAction::inject(21)};
  EXPECT_NO_THROW(run_session(c, 1));
}

TEST(Session, ConfigErrors) {
  auto c = lossless();
  c.n_init = 1;
  EXPECT_THROW(run_session(c, 1), ConfigError);
  c = lossless();
  c.links.alice_bob.loss_prob_data = 1.5;
  EXPECT_THROW(run_session(c, 1), ConfigError);
}

TEST(Session, DeterministicTrace) {
  auto c = lossy(500, 10, 0.05);
  c.record_trace = true;
  c.attacker.actions = {AttackAction::inject_ack(100), AttackAction::replay(300, 200)};
  const auto a = run_session(c, 77);
  const auto b = run_session(c, 77);
  EXPECT_EQ(jsonl(a.trace), jsonl(b.trace));
  EXPECT_NE(jsonl(a.trace), jsonl(run_session(c, 78).trace));
}

TEST(Session, EveLinksDoNotMoveLegitimateOutcomes) {
  auto c = lossy(500, 10, 0.0);
  const auto a = run_session(c, 79);
  c.links.alice_eve = LinkModel::bernoulli(0.4);
  c.links.bob_eve = LinkModel::bernoulli(0.3, 0.2);
  const auto b = run_session(c, 79);
  EXPECT_EQ(a.v0, b.v0);
  EXPECT_EQ(a.metrics.accepted, b.metrics.accepted);
  EXPECT_EQ(a.metrics.init_transmissions, b.metrics.init_transmissions);
  EXPECT_GT(a.metrics.useful, b.metrics.useful);
}

TEST(Session, FrameConservation) {
  auto c = lossy(2000, 10, 0.02);
  c.links.alice_bob = LinkModel::bernoulli(0.2, 0.2);
  c.record_trace = true;
  const auto r = run_session(c, 80);
  const auto& m = r.metrics;
  std::size_t lost = 0, acks = 0;
  for (const auto& e : r.trace.events) {
    if (e.kind == FrameKind::Data && e.outcome == "lost") ++lost;
    if (e.kind == FrameKind::Ack) ++acks;
  }
  EXPECT_EQ(m.data_sent, 2000u);
  EXPECT_EQ(m.accepted + m.honest_replay_discards + lost, m.data_sent);
  EXPECT_EQ(acks, m.accepted);
  EXPECT_GT(m.second_attempts, 0u);
  EXPECT_EQ(m.desync, 0u);
}

TEST(Session, OnlineAndOfflineEveAgree) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto c = lossy(300, 6, 0.01);
    c.links.alice_bob = LinkModel::bernoulli(0.1, 0.1);
    c.links.bob_eve = LinkModel::bernoulli(0.01, 0.01);
    if (seed % 3 == 0) c.attacker.actions = {AttackAction::inject_ack(1 + seed % 250)};
    c.record_trace = true;
    const auto r = run_session(c, seed);
    const auto off = eve_track(r.trace);
    ASSERT_EQ(off.useful, r.metrics.useful) << seed;
    ASSERT_EQ(off.blind, r.metrics.blind) << seed;
    ASSERT_EQ(off.v0_known, r.metrics.v0_recovered) << seed;
    ASSERT_EQ(v0_from_trace(r.trace, 24), r.v0) << seed;
  }
}

TEST(Session, InitCaptureMatchesProductForm) {
  auto c = lossy(0, 10, 0.1);
  c.links.alice_bob = LinkModel::bernoulli(0.05, 0.05);
  const int n = 4000;
  int hits = 0;
  for (int s = 0; s < n; ++s) {
    const auto m = run_session(c, 1000 + s).metrics;
    ASSERT_TRUE(m.v0_agree);
    hits += m.v0_recovered;
  }
  const auto est = proportion(hits, n);
  EXPECT_LE(std::abs(est.mean - std::pow(0.9, 10)), 3 * est.std_err);
}

TEST(Session, UsefulFramesShrinkWithInitLengthAndRespectBound) {
  double prev = 1e300;
  for (std::size_t n : {10u, 100u}) {
    const auto c = lossy(2000, n, 0.02);
    RunningStats u;
    for (int s = 0; s < 200; ++s) u.add(static_cast<double>(run_session(c, 5000 + s).metrics.useful));
    const double bound = expected_useful_bound(0.02, n, n + 2000);
    EXPECT_LE(u.mean(), bound + 3 * u.std_err()) << n;
    EXPECT_LT(u.mean(), prev);
    prev = u.mean();
  }
}

TEST(Session, ChannelDrivenLossRate) {
  auto c = lossless(20'000);
  // Rayleigh Bob gain, R0 = 1, P = 2: loss = 1 - e^{-1/2}.
  c.links.alice_bob = LinkModel::from_channel(FadingModel::rayleigh(), 1.0, 2.0);
  c.record_trace = true;
  const auto r = run_session(c, 81);
  std::size_t lost = 0;
  for (const auto& e : r.trace.events)
    if (e.kind == FrameKind::Data && !e.delivered_to("bob")) ++lost;
  const auto est = proportion(lost, r.metrics.data_sent);
  EXPECT_LE(std::abs(est.mean - (1.0 - std::exp(-0.5))), 3 * est.std_err);
}

TEST(Session, MulticastDelivery) {
  auto c = lossless(10);
  c.multicast.clients = 3;
  c.multicast.frames = 500;
  c.multicast.client_loss = 0.1;
  c.record_trace = true;
  const auto r = run_session(c, 82);
  const auto& m = r.metrics;
  EXPECT_EQ(m.mcast_sent, 500u);
  EXPECT_EQ(m.mcast_alarms, 0u);
  EXPECT_GE(m.vg_attempts, 4u);
  const double rate = static_cast<double>(m.mcast_accepted) / (500.0 * 4.0);
  EXPECT_NEAR(rate, 0.9, 0.03);
  std::size_t mc = 0;
  for (const auto& e : r.trace.events)
    if (e.kind == FrameKind::Mcast) {
      ++mc;
      EXPECT_TRUE(e.vg_id.has_value());
    }
  EXPECT_EQ(mc, 500u);
}
