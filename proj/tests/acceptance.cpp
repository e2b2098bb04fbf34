// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any fails.
// Tolerances are fixed here; seeds are fixed so reruns print the same lines.
//
//   acceptance [--expect-fail 4,8]
//
// With --expect-fail the exit status is 0 iff the failing set is exactly the
// listed one, so a new failure or an unexpected pass is still caught.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "arqsec/adapt.hpp"
#include "arqsec/coding.hpp"
#include "arqsec/crown.hpp"
#include "arqsec/experiment.hpp"
#include "arqsec/fading.hpp"
#include "arqsec/netsim.hpp"
#include "arqsec/rates.hpp"
#include "arqsec/stats.hpp"

using namespace arqsec;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::set<int> failed;

void report(int id, const char* name, const Verdict& v, double secs) {
  std::printf("%s C%d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), secs);
  std::fflush(stdout);
  if (!v.pass) failed.insert(id);
}

template <class F>
void criterion(int id, const char* name, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = f();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  report(id, name, v, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

std::string fmt(const char* f, double a) {
  char b[128];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

void note(const std::string& s) {
  std::printf("NOTE %s\n", s.c_str());
  std::fflush(stdout);
}

const std::vector<double> kR0{0.5, 1.0, 2.0, 4.0, 8.0};
const std::vector<double> kSnrDb{0.0, 5.0, 10.0, 15.0, 20.0};

// ---------------------------------------------------------------------------

Verdict c1() {
  constexpr double kTol = 3.0;
  Rng rng(0xC1);
  double worst = 0.0;
  for (double r0 : kR0)
    for (double db : kSnrDb) {
      const double p = db_to_linear(db);
      const auto mc =
          key_rate_independent(exponential_marginal(), exponential_marginal(), RateParams::at(r0, p), 1'000'000, rng);
      const double cf = key_rate_rayleigh_closed_form(r0, p);
      const double z = mc.std_err > 0 ? std::abs(mc.value - cf) / mc.std_err : (mc.value == cf ? 0.0 : 1e9);
      worst = std::max(worst, z);
    }
  return {worst <= kTol, "25 points, worst |z| = " + fmt("%.2f", worst) + " (tol 3)"};
}

Verdict c2() {
  constexpr double kTol = 2.0;
  Rng rng(0xC2);
  double worst = 0.0;
  for (double r0 : kR0)
    for (double db : kSnrDb) {
      const auto s = key_rate_general(FadingModel::fully_correlated(), RateParams::at(r0, db_to_linear(db)),
                                      100'000, rng);
      const double z = s.std_err > 0 ? std::abs(s.value) / s.std_err : (s.value == 0.0 ? 0.0 : 1e9);
      worst = std::max(worst, z);
    }
  return {worst <= kTol, "25 points, worst |C_s|/se = " + fmt("%.2f", worst) + " (tol 2)"};
}

Verdict c3() {
  // (a) C_e == 0 exactly whenever Rc >= R0, closed form and Monte Carlo.
  Rng rng(0xC3);
  int nonzero = 0;
  for (double r0 : {0.5, 1.0, 2.0, 4.0})
    for (double rc : {r0, r0 + 0.5, 7.0}) {
      if (rc < r0) continue;
      for (double db : kSnrDb) {
        const double p = db_to_linear(db);
        nonzero += erasure_capacity_rayleigh(r0, p, rc).value != 0.0;
        nonzero += erasure_capacity(FadingModel::rayleigh(), RateParams::at(r0, p, rc), 10'000, rng).value != 0.0;
      }
    }
  // (b) Rc = 0: C_e at the key-rate optimizer exceeds C_s at every SNR in 0..20 dB.
  int not_above = 0;
  double min_gap = 1e300;
  for (double db = 0.0; db <= 20.0; db += 2.5) {
    const double p = db_to_linear(db);
    const auto g = GridSpec::defaults(p);
    Rng r(0xC30 + static_cast<std::uint64_t>(db * 10));
    const auto cs = optimize(Objective::KeyRateGeneral, FadingModel::rayleigh(), p, 0.0, g, 100'000, r);
    Rng same(0xC30 + static_cast<std::uint64_t>(db * 10));
    const auto ce = erasure_capacity(FadingModel::rayleigh(), RateParams{cs.params.r0, cs.params.p, p, 0.0},
                                     100'000, same);
    const double gap = (ce.value - cs.value) / combined_sigma(ce.std_err, cs.std_err);
    min_gap = std::min(min_gap, gap);
    not_above += !(gap > 3.0);
  }
  // Informational: the same comparison at Rc = 7 (closed forms, optimum of each).
  int ce_above_at_rc7 = 0;
  for (double db = -5.0; db <= 20.0; db += 2.5) {
    const double p = db_to_linear(db);
    const auto g = GridSpec::defaults(p);
    ce_above_at_rc7 += optimize_closed_form(ClosedForm::ErasureCapacity, p, 7.0, g).value >
                       optimize_closed_form(ClosedForm::KeyRate, p, 0.0, g).value;
  }
  note("C3 Rc=7: erasure capacity above key rate at " + std::to_string(ce_above_at_rc7) + " of 11 SNR points in -5..20 dB");
  return {nonzero == 0 && not_above == 0,
          std::to_string(nonzero) + " nonzero C_e with Rc>=R0; Rc=0 ordering held at " +
              std::to_string(9 - not_above) + "/9 SNRs, min gap " + fmt("%.1f", min_gap) + " sigma (need > 3)"};
}

Verdict c4() {
  constexpr double kVarTol = 0.10;
  constexpr double kLimitTol = 0.05;
  std::ostringstream d;
  bool ok = true;
  for (unsigned n : {4u, 10u}) {
    Rng rng(0xC40 + n);
    const auto s = decorrelation_stats(n, 100'000, rng);
    const double theory = 1.0 / (n * (n - 1.0));
    const double rel = std::abs(s.rho_var - theory) / theory;
    ok = ok && rel <= kVarTol;
    d << "var(rho) N=" << n << " rel err " << fmt("%.3f", rel) << "; ";
  }
  const double p_bar = db_to_linear(10.0);
  const auto grid = GridSpec::defaults(p_bar);
  const double indep = optimize_closed_form(ClosedForm::KeyRate, p_bar, 0.0, grid).value;
  auto key_rate = [&](unsigned n, AntennaGains g) {
    Rng rng(0xC48 + n);
    return optimize(Objective::KeyRateGeneral, FadingModel::dumb_antenna(n, g), p_bar, 0.0, grid, 100'000, rng);
  };
  bool mono = true;
  RateSolution prev;
  d << "K/K_ind";
  for (unsigned n : {1u, 2u, 4u, 8u}) {
    const auto k = key_rate(n, AntennaGains::LineOfSight);
    if (n > 1 && k.value < prev.value - 3 * combined_sigma(k.std_err, prev.std_err)) mono = false;
    d << " N=" << n << ":" << fmt("%.3f", k.value / indep);
    prev = k;
  }
  const auto k16 = key_rate(16, AntennaGains::LineOfSight);
  const double rel16 = std::abs(k16.value - indep) / indep;
  d << " N=16:" << fmt("%.3f", k16.value / indep) << "; nondecreasing " << (mono ? "yes" : "NO");
  ok = ok && mono && rel16 <= kLimitTol;

  std::ostringstream alt;
  alt << "C4 correlated-Rayleigh antennas K/K_ind:";
  for (unsigned n : {1u, 2u, 4u, 8u, 16u})
    alt << " N=" << n << ":" << fmt("%.3f", key_rate(n, AntennaGains::CorrelatedRayleigh).value / indep);
  note(alt.str());
  return {ok, d.str()};
}

Verdict c5() {
  const double p = db_to_linear(10.0);
  const auto rates = linear_rate_grid(0.05, 8.0);
  const auto stat = stationary_optimum(p, rates);
  Rng erng(0xC5E);
  const auto erg = ergodic_upper_bound(FadingModel::rayleigh(), p, 1'000'000, erng);
  std::vector<MeanEstimate> got;
  bool bracket = true;
  std::ostringstream d;
  d << "stat " << fmt("%.4f", stat.value) << ", ergodic " << fmt("%.4f", erg.value) << ";";
  for (double alpha : {0.1, 0.5, 0.9}) {
    const AdaptModel model(alpha, p, rates);
    RunningStats acc;
    for (std::uint64_t s = 0; s < 50; ++s) {
      Rng rng = Rng(0xC5).split(s);
      acc.add(model.run(10'000, rng).rate);
    }
    const auto e = acc.estimate();
    got.push_back(e);
    bracket = bracket && e.mean >= stat.value - 3 * e.std_err &&
              e.mean <= erg.value + 3 * combined_sigma(e.std_err, erg.std_err);
    d << " a=" << alpha << ":" << fmt("%.4f", e.mean) << "+-" << fmt("%.4f", e.std_err);
  }
  bool mono = true;
  for (std::size_t i = 1; i < got.size(); ++i)
    mono = mono && got[i].mean <= got[i - 1].mean + 3 * combined_sigma(got[i].std_err, got[i - 1].std_err);
  d << "; bracket " << (bracket ? "ok" : "VIOLATED") << ", nonincreasing " << (mono ? "ok" : "NO");
  return {bracket && mono, d.str()};
}

Verdict c6() {
  Rng rng(0xC6);
  double worst_out = 0.0;
  double worst_rate = 0.0;
  int bad = 0;
  for (unsigned k : {4u, 8u})
    for (double r0 : {1.0, 2.0})
      for (double p : {1.0, 10.0})
        for (double rc : {0.0, 1.0}) {
          DistillConfig c;
          c.k = k;
          c.r0 = r0;
          c.p = p;
          c.rc = rc;
          const auto r = simulate_distillation(c, FrameErrorModel::capacity_threshold(), 100'000, rng);
          const double zo = std::abs(r.outage.mean - outage_prob_closed_form(c)) / r.outage.std_err;
          const double zr = std::abs(r.key_rate.mean - key_rate_delay_limited(c)) / r.key_rate.std_err;
          worst_out = std::max(worst_out, zo);
          worst_rate = std::max(worst_rate, zr);
          bad += (zo > 3.0) + (zr > 3.0) + (r.key_mismatches != 0);
        }
  return {bad == 0, "16 configs, worst |z| outage " + fmt("%.2f", worst_out) + ", key rate " +
                        fmt("%.2f", worst_rate) + " (tol 3)"};
}

Verdict c7() {
  std::size_t desync = 0;
  std::size_t alarms = 0;
  std::size_t runs = 0;
  for (unsigned pattern = 0; pattern < 1024; ++pattern) {
    std::vector<bool> data(5), ack(5);
    for (unsigned i = 0; i < 5; ++i) {
      data[i] = (pattern >> i) & 1U;
      ack[i] = (pattern >> (5 + i)) & 1U;
    }
    for (std::uint64_t s = 0; s < 16; ++s) {
      Rng rng = Rng(0xC7).split(pattern).split(s);
      const auto r = run_honest_link(VWord::random(4, rng), data, ack, rng);
      desync += r.desync;
      alarms += r.alarms;
      ++runs;
    }
  }
  std::size_t fuzz = 0;
  Rng rng(0xC71);
  for (unsigned w : {24u, 48u}) {
    for (int t = 0; t < 500'000; ++t) {
      const std::size_t len = 1 + rng.below(40);
      const double ld = rng.uniform() * 0.6;
      const double la = rng.uniform() * 0.6;
      std::vector<bool> data(len), ack(len);
      for (std::size_t i = 0; i < len; ++i) {
        data[i] = !rng.bernoulli(ld);
        ack[i] = !rng.bernoulli(la);
      }
      const auto r = run_honest_link(VWord::random(w, rng), data, ack, rng);
      desync += r.desync;
      alarms += r.alarms;
      ++fuzz;
    }
  }
  return {desync == 0 && alarms == 0, std::to_string(runs) + " exhaustive runs (1024 patterns), " +
                                          std::to_string(fuzz) + " fuzz traces: desync " + std::to_string(desync) +
                                          ", alarms " + std::to_string(alarms)};
}

Verdict c8() {
  constexpr unsigned kWidth = 24;
  const double limit = 10.0 * std::ldexp(1.0, -static_cast<int>(kWidth));
  std::size_t sessions = 0;
  std::size_t undetected = 0;
  std::size_t skipped = 0;
  std::size_t two_back = 0;
  for (const char* kind : {"inject", "replay"}) {
    for (std::uint64_t s = 0; s < 5000; ++s) {
      Rng seed = Rng(0xC8).split(kind[0]).split(s);
      Rng script_rng = seed.split(99);
      SessionConfig cfg;
      cfg.width = kWidth;
      cfg.n_init = 10;
      cfg.n_data = 100;
      cfg.links.alice_bob = LinkModel::bernoulli(0.0, 0.05);
      cfg.links.alice_eve = LinkModel::bernoulli(0.0);
      cfg.links.bob_eve = LinkModel::bernoulli(0.0);
      cfg.attacker = detail::random_attack(kind, cfg.n_data, script_rng);
      const auto m = run_session(cfg, seed).metrics;
      ++sessions;
      skipped += m.attack_skipped;
      undetected += m.attack_undetected;
      const auto& a = cfg.attacker.actions.front();
      if (m.attack_undetected && a.type == AttackAction::Type::ReplayFrame && a.ref + 2 == a.at) ++two_back;
    }
  }
  const double frac = static_cast<double>(undetected) / static_cast<double>(sessions);
  return {frac <= limit && skipped == 0,
          std::to_string(sessions) + " sessions, undetected " + std::to_string(undetected) + " (frac " +
              fmt("%.2g", frac) + ", limit " + fmt("%.2g", limit) + "), of which replays of frame at-2: " +
              std::to_string(two_back) + ", skipped " + std::to_string(skipped)};
}

Verdict c9() {
  std::ostringstream d;
  bool ok = true;
  // V0 recovery against the product form.
  double worst = 0.0;
  for (double g : {0.02, 0.1})
    for (std::size_t n : {10u, 100u}) {
      SessionConfig cfg;
      cfg.width = 48;
      cfg.n_init = n;
      cfg.n_data = 0;
      cfg.links = Links::homogeneous(0.005, 0.009, g);
      std::size_t hits = 0;
      for (std::uint64_t s = 0; s < 10'000; ++s) hits += run_session(cfg, Rng(0xC9).split(n).split(s)).metrics.v0_recovered;
      const auto est = proportion(hits, 10'000);
      const double half = std::ceil(static_cast<double>(n) / 2.0);
      const double p0 = std::pow(1.0 - g, 2.0 * half);
      const double z = std::abs(est.mean - p0) / est.std_err;
      worst = std::max(worst, z);
      ok = ok && z <= 3.0;
    }
  d << "P0 worst |z| " << fmt("%.2f", worst) << "; E[u]";
  // Useful frames against the bound, and monotone in n_init.
  for (double g : {0.004, 0.02}) {
    double prev = -1.0;
    for (std::size_t n : {10u, 100u, 1000u}) {
      SessionConfig cfg;
      cfg.width = 48;
      cfg.n_init = n;
      cfg.n_data = 10'000;
      cfg.links.alice_bob = LinkModel::bernoulli(0.005, 0.009);
      cfg.links.alice_eve = LinkModel::bernoulli(g);
      cfg.links.bob_eve = LinkModel::bernoulli(g);
      RunningStats u;
      for (std::uint64_t s = 0; s < 100; ++s)
        u.add(static_cast<double>(run_session(cfg, Rng(0xC9A).split(n).split(s)).metrics.useful));
      const std::size_t stored = 2 * ((n + 1) / 2);
      const double bound = expected_useful_bound(g, stored, stored + cfg.n_data);
      const bool below = u.mean() <= bound + 3 * u.std_err();
      const bool down = prev < 0 || u.mean() < prev || (u.mean() == 0.0 && prev == 0.0);
      ok = ok && below && down;
      d << " g=" << g << ",n=" << n << ":" << fmt("%.3g", u.mean()) << "<=" << fmt("%.3g", bound)
        << (below ? "" : "(ABOVE)") << (down ? "" : "(NOT DECREASING)");
      prev = u.mean();
    }
  }
  return {ok, d.str()};
}

std::string render(const ExperimentSpec& spec, unsigned jobs) {
  const auto out = run_experiment(spec, jobs);
  std::ostringstream os;
  write_csv(os, spec, out.table);
  if (out.trace) {
    os << "--trace--\n";
    out.trace->write_jsonl(os);
  }
  return os.str();
}

Verdict c10() {
  const char* docs[] = {
      "kind = RateCurves\nmaster_seed = 10\nsamples = 5000\n[RateCurves]\nsnr_db = 0, 10\nrc = 0, 3\n"
      "r0_step = 0.5\np_points = 5\n",
      "kind = DumbAntenna\nmaster_seed = 10\nsamples = 5000\n[DumbAntenna]\nn = 1, 2, 4\nrho_trials = 5000\n"
      "r0_step = 0.5\np_points = 5\n",
      "kind = TemporalAdaptation\nmaster_seed = 10\nseeds = 3\n[TemporalAdaptation]\nalpha = 0.1, 0.9\n"
      "frames = 2000\nergodic_samples = 10000\n",
      "kind = DelayLimited\nmaster_seed = 10\nsamples = 5000\n[DelayLimited]\nk = 2, 4\nr0 = 1, 2\nsnr_db = 10\n",
      "kind = CrownSecrecy\nmaster_seed = 10\nseeds = 20\n[CrownSecrecy]\ngamma_ae = 0.02\nn_init = 10, 100\n"
      "n_data = 1000\nwrite_trace = true\n",
      "kind = CrownAttack\nmaster_seed = 10\nseeds = 200\n[CrownAttack]\nwrite_trace = true\n",
  };
  int same = 0;
  int total = 0;
  std::string bad;
  for (const char* text : docs) {
    const auto v = validate_text(text);
    if (!v.spec) return {false, "config rejected: " + v.issues.front().field + " " + v.issues.front().message};
    const std::string a = render(*v.spec, 1);
    const std::string b = render(*v.spec, 1);
    const std::string c = render(*v.spec, 2);
    ++total;
    if (a == b && a == c) ++same;
    else bad += std::string(" ") + to_string(v.spec->kind);
  }
  return {same == total, std::to_string(same) + "/" + std::to_string(total) +
                             " kinds byte-identical across reruns and --jobs 1/2" + bad};
}

}  // namespace

int main(int argc, char** argv) {
  std::optional<std::set<int>> expected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--expect-fail") == 0 && i + 1 < argc) {
      expected.emplace();
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) expected->insert(std::stoi(item));
    } else {
      std::fprintf(stderr, "usage: acceptance [--expect-fail ID,ID,...]\n");
      return 2;
    }
  }
  criterion(1, "closed form vs Monte Carlo key rate", c1);
  criterion(2, "fully correlated channel gives zero key rate", c2);
  criterion(3, "erasure capacity sanity and ordering", c3);
  criterion(4, "dumb-antenna decorrelation and key-rate trend", c4);
  criterion(5, "temporal adaptation bracket and trend", c5);
  criterion(6, "delay-limited outage and key rate", c6);
  criterion(7, "honest V-chain synchronization", c7);
  criterion(8, "injection and replay detection", c8);
  criterion(9, "V0 recovery and useful-frame bound", c9);
  criterion(10, "byte-identical reruns", c10);
  std::printf("%zu of 10 criteria failed\n", failed.size());
  if (!expected) return failed.empty() ? 0 : 1;
  const bool match = failed == *expected;
  std::printf("failing set %s the expected known failures\n", match ? "matches" : "DIFFERS from");
  return match ? 0 : 1;
}
