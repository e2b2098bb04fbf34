#pragma once

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "arqsec/adapt.hpp"
#include "arqsec/coding.hpp"
#include "arqsec/crown.hpp"
#include "arqsec/error.hpp"
#include "arqsec/fading.hpp"
#include "arqsec/netsim.hpp"
#include "arqsec/random.hpp"
#include "arqsec/rates.hpp"
#include "arqsec/stats.hpp"
#include "arqsec/trace.hpp"

namespace arqsec {

// ---------------------------------------------------------------------------
// Config document

struct ConfigIssue {
  std::string field;
  std::string message;
};

/// Flat key-value text: top-level `key = value` lines, then one `[Kind]`
/// section. `#` and `;` start comments. A CSV written by `run` is also
/// accepted: its `# arqsec-spec:` line carries the same document as JSON.
struct ConfigDoc {
  std::map<std::string, std::string> top;
  std::string section;
  std::map<std::string, std::string> params;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline constexpr const char* kSpecPrefix = "# arqsec-spec: ";

inline std::string json_scalar_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

inline void doc_from_json(const nlohmann::json& j, ConfigDoc& doc, std::vector<ConfigIssue>& issues) {
  if (!j.is_object()) {
    issues.push_back({"spec", "embedded spec is not a JSON object"});
    return;
  }
  for (const auto& [k, v] : j.items()) {
    if (k == "params") continue;
    doc.top[k] = json_scalar_text(v);
  }
  if (doc.top.count("kind") != 0) doc.section = doc.top["kind"];
  if (j.contains("params") && j["params"].is_object()) {
    for (const auto& [k, v] : j["params"].items()) {
      if (v.is_array()) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : ",") + json_scalar_text(x);
        doc.params[k] = s;
      } else {
        doc.params[k] = json_scalar_text(v);
      }
    }
  }
}

}  // namespace detail

inline ConfigDoc parse_config(const std::string& text, std::vector<ConfigIssue>& issues) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool in_section = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind(detail::kSpecPrefix, 0) == 0) {
      try {
        detail::doc_from_json(nlohmann::json::parse(line.substr(std::string(detail::kSpecPrefix).size())), doc,
                              issues);
      } catch (const nlohmann::json::exception& e) {
        issues.push_back({"line " + std::to_string(lineno), std::string("bad embedded spec: ") + e.what()});
      }
      return doc;
    }
    const std::string s = detail::trim(line.substr(0, line.find_first_of("#;")));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        issues.push_back({"line " + std::to_string(lineno), "unterminated section header"});
        continue;
      }
      if (in_section) {
        issues.push_back({"line " + std::to_string(lineno), "only one section is allowed"});
        continue;
      }
      doc.section = detail::trim(s.substr(1, s.size() - 2));
      in_section = true;
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      issues.push_back({"line " + std::to_string(lineno), "expected key = value"});
      continue;
    }
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string value = detail::trim(s.substr(eq + 1));
    auto& target = in_section ? doc.params : doc.top;
    if (key.empty()) {
      issues.push_back({"line " + std::to_string(lineno), "empty key"});
    } else if (!target.emplace(key, value).second) {
      issues.push_back({key, "duplicate key"});
    }
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Experiment spec

enum class ExperimentKind { RateCurves, DumbAntenna, TemporalAdaptation, DelayLimited, CrownSecrecy, CrownAttack };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::RateCurves: return "RateCurves";
    case ExperimentKind::DumbAntenna: return "DumbAntenna";
    case ExperimentKind::TemporalAdaptation: return "TemporalAdaptation";
    case ExperimentKind::DelayLimited: return "DelayLimited";
    case ExperimentKind::CrownSecrecy: return "CrownSecrecy";
    case ExperimentKind::CrownAttack: return "CrownAttack";
  }
  return "?";
}

struct RateCurvesParams {
  std::vector<double> snr_db;
  std::vector<double> rc{0.0};
  std::string model = "rayleigh";
  double mean_b = 1.0;
  double mean_e = 1.0;
  double r0_max = 10.0;
  double r0_step = 0.1;
  std::size_t p_points = 20;
};

struct DumbAntennaParams {
  std::vector<double> n{1, 2, 4, 8, 16};
  double snr_db = 10.0;
  std::string gains = "line_of_sight";
  std::size_t rho_trials = 100'000;
  double r0_max = 10.0;
  double r0_step = 0.1;
  std::size_t p_points = 20;
};

struct TemporalParams {
  std::vector<double> alpha;
  double snr_db = 10.0;
  std::size_t frames = 10'000;
  std::size_t burn_in = 0;
  double rate_step = 0.05;
  double rate_max = 8.0;
  std::size_t ergodic_samples = 1'000'000;
  std::size_t grid_points = 200;
};

struct DelayParams {
  std::vector<double> k;
  std::vector<double> r0;
  std::vector<double> snr_db;
  std::vector<double> rc{0.0};
  std::size_t frame_bits = 240;
};

struct CrownSecrecyParams {
  double gamma_ab = 0.005;
  double gamma_ba = 0.009;
  std::vector<double> gamma_ae;
  std::optional<double> gamma_be;  // defaults to the gamma_ae of each point
  std::vector<double> n_init;
  std::size_t n_data = 10'000;
  unsigned width = 48;
  double eve_ack_loss = 0.0;
  bool write_trace = false;
};

struct CrownAttackParams {
  std::vector<std::string> attacks{"inject", "replay"};
  unsigned width = 24;
  std::size_t n_init = 10;
  std::size_t n_data = 100;
  double gamma_ab = 0.0;
  double gamma_ba = 0.05;
  double gamma_ae = 0.0;
  double false_accept = 0.0;
  bool write_trace = false;
};

using KindParams = std::variant<RateCurvesParams, DumbAntennaParams, TemporalParams, DelayParams,
                                CrownSecrecyParams, CrownAttackParams>;

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::RateCurves;
  std::uint64_t master_seed = 0;
  std::string output;
  std::size_t samples = 0;  // Monte Carlo samples or episodes per point
  std::size_t seeds = 0;    // independent sessions or episodes per point
  KindParams params;

  /// Canonical JSON of everything that determines the output (the path is
  /// left out so a copy written elsewhere is byte-identical).
  nlohmann::ordered_json to_json() const;
};

namespace detail {

// Typed access to one key-value map, accumulating issues instead of throwing.
class FieldReader {
 public:
  FieldReader(const std::map<std::string, std::string>& kv, std::string ctx, std::vector<ConfigIssue>& issues)
      : kv_(kv), ctx_(std::move(ctx)), issues_(issues) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  void error(const std::string& key, const std::string& msg) { issues_.push_back({name(key), msg}); }

  std::optional<double> real(const std::string& key, double lo, double hi, bool required = false) {
    const auto raw = take(key, required);
    if (!raw) return std::nullopt;
    const auto v = parse_real(key, *raw);
    if (v && !in_range(key, *v, lo, hi)) return std::nullopt;
    return v;
  }

  std::optional<std::vector<double>> reals(const std::string& key, double lo, double hi, bool required = false,
                                           bool integral = false) {
    const auto raw = take(key, required);
    if (!raw) return std::nullopt;
    std::vector<double> out;
    std::stringstream ss(*raw);
    std::string item;
    bool ok = true;
    while (std::getline(ss, item, ',')) {
      const auto v = parse_real(key, trim(item));
      if (!v) {
        ok = false;
        continue;
      }
      if (integral && std::floor(*v) != *v) {
        error(key, "value " + trim(item) + " must be an integer");
        ok = false;
        continue;
      }
      if (!in_range(key, *v, lo, hi)) ok = false;
      out.push_back(*v);
    }
    if (ok && out.empty()) {
      error(key, "list is empty");
      ok = false;
    }
    return ok ? std::optional(out) : std::nullopt;
  }

  std::optional<std::uint64_t> count(const std::string& key, std::uint64_t lo, std::uint64_t hi,
                                     bool required = false) {
    const auto raw = take(key, required);
    if (!raw) return std::nullopt;
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(raw->c_str(), &end, 10);
    if (raw->empty() || end == raw->c_str() || *end != '\0' || errno == ERANGE || raw->front() == '-') {
      error(key, "expected a non-negative integer, got '" + *raw + "'");
      return std::nullopt;
    }
    if (v < lo || v > hi) {
      error(key, "value " + *raw + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::string> choice(const std::string& key, const std::vector<std::string>& options) {
    const auto raw = take(key, false);
    if (!raw) return std::nullopt;
    if (std::find(options.begin(), options.end(), *raw) == options.end()) {
      std::string all;
      for (const auto& o : options) all += (all.empty() ? "" : "|") + o;
      error(key, "expected one of " + all + ", got '" + *raw + "'");
      return std::nullopt;
    }
    return raw;
  }

  std::optional<std::vector<std::string>> choices(const std::string& key, const std::vector<std::string>& options) {
    const auto raw = take(key, false);
    if (!raw) return std::nullopt;
    std::vector<std::string> out;
    std::stringstream ss(*raw);
    std::string item;
    bool ok = true;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (std::find(options.begin(), options.end(), item) == options.end()) {
        error(key, "unknown entry '" + item + "'");
        ok = false;
      }
      out.push_back(item);
    }
    if (ok && out.empty()) {
      error(key, "list is empty");
      ok = false;
    }
    return ok ? std::optional(out) : std::nullopt;
  }

  std::optional<bool> flag(const std::string& key) {
    const auto raw = take(key, false);
    if (!raw) return std::nullopt;
    if (*raw == "true" || *raw == "1") return true;
    if (*raw == "false" || *raw == "0") return false;
    error(key, "expected true or false, got '" + *raw + "'");
    return std::nullopt;
  }

  std::optional<std::string> text(const std::string& key, bool required = false) { return take(key, required); }

  void reject_unknown() {
    for (const auto& [k, v] : kv_)
      if (used_.count(k) == 0) error(k, "unknown key");
  }

 private:
  std::string name(const std::string& key) const { return ctx_.empty() ? key : ctx_ + "." + key; }

  std::optional<std::string> take(const std::string& key, bool required) {
    used_.insert(key);
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      if (required) error(key, "missing required key");
      return std::nullopt;
    }
    return it->second;
  }

  std::optional<double> parse_real(const std::string& key, const std::string& raw) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(raw.c_str(), &end);
    if (raw.empty() || end == raw.c_str() || *end != '\0' || !std::isfinite(v)) {
      error(key, "expected a finite number, got '" + raw + "'");
      return std::nullopt;
    }
    return v;
  }

  bool in_range(const std::string& key, double v, double lo, double hi) {
    if (v >= lo && v <= hi) return true;
    std::ostringstream os;
    os << "value " << v << " outside [" << lo << ", " << hi << "]";
    error(key, os.str());
    return false;
  }

  const std::map<std::string, std::string>& kv_;
  std::string ctx_;
  std::vector<ConfigIssue>& issues_;
  std::set<std::string> used_;
};

template <class T>
void assign(T& dst, const std::optional<T>& v) {
  if (v) dst = *v;
}

}  // namespace detail

inline constexpr double kDelayFrameBudget = 1e10;

struct ValidationResult {
  std::optional<ExperimentSpec> spec;
  std::vector<ConfigIssue> issues;
};

/// Full validation of a config document; reports every violation.
inline ValidationResult validate_config(const ConfigDoc& doc, std::vector<ConfigIssue> issues = {}) {
  using detail::assign;
  ExperimentSpec spec;
  detail::FieldReader top(doc.top, "", issues);

  static const std::vector<std::string> kinds{"RateCurves",   "DumbAntenna",  "TemporalAdaptation",
                                              "DelayLimited", "CrownSecrecy", "CrownAttack"};
  const auto kind = top.text("kind", true);
  bool kind_ok = false;
  if (kind) {
    const auto it = std::find(kinds.begin(), kinds.end(), *kind);
    if (it == kinds.end()) {
      top.error("kind", "unknown experiment kind '" + *kind + "'");
    } else {
      spec.kind = static_cast<ExperimentKind>(it - kinds.begin());
      kind_ok = true;
    }
  }
  if (!top.has("master_seed")) {
    top.error("master_seed", "missing required key: an explicit seed is mandatory (no implicit entropy)");
    top.text("master_seed");
  } else if (const auto s = top.count("master_seed", 0, ~std::uint64_t{0})) {
    spec.master_seed = *s;
  }
  assign(spec.output, top.text("output"));
  const auto samples = top.count("samples", 1000, 1'000'000'000);
  const auto seeds = top.count("seeds", 1, 100'000'000);
  top.reject_unknown();

  if (kind_ok && doc.section != *kind)
    issues.push_back({"section", doc.section.empty() ? "missing [" + *kind + "] section"
                                                     : "section [" + doc.section + "] does not match kind " + *kind});

  detail::FieldReader p(doc.params, kind_ok ? *kind : doc.section, issues);
  if (kind_ok) {
    switch (spec.kind) {
      case ExperimentKind::RateCurves: {
        RateCurvesParams r;
        assign(r.snr_db, p.reals("snr_db", -50, 60, true));
        assign(r.rc, p.reals("rc", 0, 64));
        assign(r.model, p.choice("model", {"rayleigh", "fully_correlated"}));
        assign(r.mean_b, p.real("mean_b", 1e-9, 1e9));
        assign(r.mean_e, p.real("mean_e", 1e-9, 1e9));
        assign(r.r0_max, p.real("r0_max", 1e-3, 64));
        assign(r.r0_step, p.real("r0_step", 1e-4, 64));
        if (const auto n = p.count("p_points", 1, 10'000)) r.p_points = *n;
        if (r.model == "fully_correlated" && r.mean_b != r.mean_e)
          p.error("mean_e", "fully correlated model needs mean_b == mean_e");
        spec.samples = samples.value_or(20'000);
        spec.params = r;
        break;
      }
      case ExperimentKind::DumbAntenna: {
        DumbAntennaParams d;
        assign(d.n, p.reals("n", 1, 4096, false, true));
        assign(d.snr_db, p.real("snr_db", -50, 60));
        assign(d.gains, p.choice("gains", {"line_of_sight", "correlated_rayleigh"}));
        if (const auto t = p.count("rho_trials", 1000, 1'000'000'000)) d.rho_trials = *t;
        assign(d.r0_max, p.real("r0_max", 1e-3, 64));
        assign(d.r0_step, p.real("r0_step", 1e-4, 64));
        if (const auto n = p.count("p_points", 1, 10'000)) d.p_points = *n;
        spec.samples = samples.value_or(20'000);
        spec.params = d;
        break;
      }
      case ExperimentKind::TemporalAdaptation: {
        TemporalParams t;
        assign(t.alpha, p.reals("alpha", 0, 1, true));
        assign(t.snr_db, p.real("snr_db", -50, 60));
        if (const auto v = p.count("frames", 1000, 1'000'000'000)) t.frames = *v;
        if (const auto v = p.count("burn_in", 0, 1'000'000'000)) t.burn_in = *v;
        assign(t.rate_step, p.real("rate_step", 1e-4, 64));
        assign(t.rate_max, p.real("rate_max", 1e-3, 64));
        if (const auto v = p.count("ergodic_samples", 1000, 1'000'000'000)) t.ergodic_samples = *v;
        if (const auto v = p.count("grid_points", 2, 100'000)) t.grid_points = *v;
        if (t.burn_in >= t.frames) p.error("burn_in", "must be smaller than frames");
        spec.seeds = seeds.value_or(50);
        spec.params = t;
        break;
      }
      case ExperimentKind::DelayLimited: {
        DelayParams d;
        assign(d.k, p.reals("k", 1, 1'000'000, true, true));
        assign(d.r0, p.reals("r0", 0, 64, true));
        assign(d.snr_db, p.reals("snr_db", -50, 60, true));
        assign(d.rc, p.reals("rc", 0, 64));
        if (const auto v = p.count("frame_bits", 1, 1'000'000)) d.frame_bits = *v;
        spec.samples = samples.value_or(100'000);
        // Episodes at low SNR and high R0 need e^{(2^R0-1)/P} frames each.
        double frames = 0.0;
        for (double k : d.k)
          for (double r0 : d.r0)
            for (double snr : d.snr_db)
              frames += k * std::exp(detail::success_exponent(r0, db_to_linear(snr)));
        frames *= static_cast<double>(d.rc.size());
        if (frames * static_cast<double>(spec.samples) > kDelayFrameBudget) {
          std::ostringstream os;
          os << "sweep needs about " << frames * static_cast<double>(spec.samples) << " simulated frames (limit "
             << kDelayFrameBudget << "); drop the high-R0 or low-SNR points";
          p.error("r0", os.str());
        }
        spec.params = d;
        break;
      }
      case ExperimentKind::CrownSecrecy: {
        CrownSecrecyParams c;
        assign(c.gamma_ab, p.real("gamma_ab", 0, 1));
        assign(c.gamma_ba, p.real("gamma_ba", 0, 1));
        assign(c.gamma_ae, p.reals("gamma_ae", 0, 1, true));
        c.gamma_be = p.real("gamma_be", 0, 1);
        assign(c.n_init, p.reals("n_init", 2, 1'000'000, true, true));
        if (const auto v = p.count("n_data", 0, 1'000'000'000)) c.n_data = *v;
        if (const auto w = p.count("width", 0, 64)) {
          if (*w != 24 && *w != 48) p.error("width", "must be 24 or 48");
          else c.width = static_cast<unsigned>(*w);
        }
        assign(c.eve_ack_loss, p.real("eve_ack_loss", 0, 1));
        assign(c.write_trace, p.flag("write_trace"));
        if (c.gamma_ab >= 1.0) p.error("gamma_ab", "a link that loses every frame never completes initialization");
        if (c.gamma_ba >= 1.0) p.error("gamma_ba", "a link that loses every frame never completes initialization");
        spec.seeds = seeds.value_or(100);
        spec.params = c;
        break;
      }
      case ExperimentKind::CrownAttack: {
        CrownAttackParams a;
        assign(a.attacks, p.choices("attacks", {"inject", "replay", "inject_ack"}));
        if (const auto w = p.count("width", 0, 64)) {
          if (*w != 24 && *w != 48) p.error("width", "must be 24 or 48");
          else a.width = static_cast<unsigned>(*w);
        }
        if (const auto v = p.count("n_init", 2, 1'000'000)) a.n_init = *v;
        if (const auto v = p.count("n_data", 2, 1'000'000'000)) a.n_data = *v;
        assign(a.gamma_ab, p.real("gamma_ab", 0, 1));
        assign(a.gamma_ba, p.real("gamma_ba", 0, 1));
        assign(a.gamma_ae, p.real("gamma_ae", 0, 1));
        assign(a.false_accept, p.real("false_accept", 0, 1));
        assign(a.write_trace, p.flag("write_trace"));
        if (a.gamma_ab >= 1.0) p.error("gamma_ab", "a link that loses every frame never completes initialization");
        if (a.gamma_ba >= 1.0) p.error("gamma_ba", "a link that loses every frame never completes initialization");
        spec.seeds = seeds.value_or(10'000);
        spec.params = a;
        break;
      }
    }
    // Counts that do not apply to this kind are rejected rather than ignored.
    const bool uses_samples = spec.kind == ExperimentKind::RateCurves || spec.kind == ExperimentKind::DumbAntenna ||
                              spec.kind == ExperimentKind::DelayLimited;
    if (uses_samples && doc.top.count("seeds")) issues.push_back({"seeds", "not used by kind " + *kind});
    if (!uses_samples && doc.top.count("samples")) issues.push_back({"samples", "not used by kind " + *kind});
    p.reject_unknown();
  }

  ValidationResult res;
  res.issues = std::move(issues);
  if (res.issues.empty()) res.spec = std::move(spec);
  return res;
}

inline ValidationResult validate_text(const std::string& text) {
  std::vector<ConfigIssue> issues;
  const ConfigDoc doc = parse_config(text, issues);
  return validate_config(doc, std::move(issues));
}

inline nlohmann::ordered_json ExperimentSpec::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["master_seed"] = master_seed;
  const bool uses_samples =
      kind == ExperimentKind::RateCurves || kind == ExperimentKind::DumbAntenna || kind == ExperimentKind::DelayLimited;
  if (uses_samples) j["samples"] = samples;
  else j["seeds"] = seeds;
  nlohmann::ordered_json p;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, RateCurvesParams>) {
          p["snr_db"] = v.snr_db;
          p["rc"] = v.rc;
          p["model"] = v.model;
          p["mean_b"] = v.mean_b;
          p["mean_e"] = v.mean_e;
          p["r0_max"] = v.r0_max;
          p["r0_step"] = v.r0_step;
          p["p_points"] = v.p_points;
        } else if constexpr (std::is_same_v<T, DumbAntennaParams>) {
          p["n"] = v.n;
          p["snr_db"] = v.snr_db;
          p["gains"] = v.gains;
          p["rho_trials"] = v.rho_trials;
          p["r0_max"] = v.r0_max;
          p["r0_step"] = v.r0_step;
          p["p_points"] = v.p_points;
        } else if constexpr (std::is_same_v<T, TemporalParams>) {
          p["alpha"] = v.alpha;
          p["snr_db"] = v.snr_db;
          p["frames"] = v.frames;
          p["burn_in"] = v.burn_in;
          p["rate_step"] = v.rate_step;
          p["rate_max"] = v.rate_max;
          p["ergodic_samples"] = v.ergodic_samples;
          p["grid_points"] = v.grid_points;
        } else if constexpr (std::is_same_v<T, DelayParams>) {
          p["k"] = v.k;
          p["r0"] = v.r0;
          p["snr_db"] = v.snr_db;
          p["rc"] = v.rc;
          p["frame_bits"] = v.frame_bits;
        } else if constexpr (std::is_same_v<T, CrownSecrecyParams>) {
          p["gamma_ab"] = v.gamma_ab;
          p["gamma_ba"] = v.gamma_ba;
          p["gamma_ae"] = v.gamma_ae;
          if (v.gamma_be) p["gamma_be"] = *v.gamma_be;
          p["n_init"] = v.n_init;
          p["n_data"] = v.n_data;
          p["width"] = v.width;
          p["eve_ack_loss"] = v.eve_ack_loss;
          p["write_trace"] = v.write_trace;
        } else if constexpr (std::is_same_v<T, CrownAttackParams>) {
          p["attacks"] = v.attacks;
          p["width"] = v.width;
          p["n_init"] = v.n_init;
          p["n_data"] = v.n_data;
          p["gamma_ab"] = v.gamma_ab;
          p["gamma_ba"] = v.gamma_ba;
          p["gamma_ae"] = v.gamma_ae;
          p["false_accept"] = v.false_accept;
          p["write_trace"] = v.write_trace;
        }
      },
      params);
  j["params"] = p;
  return j;
}

// ---------------------------------------------------------------------------
// Results and CSV

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

struct ExperimentOutput {
  Table table;
  std::optional<SessionTrace> trace;
};

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string fmt_count(std::uint64_t v) { return std::to_string(v); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_csv(std::ostream& os, const ExperimentSpec& spec, const Table& t) {
  os << detail::kSpecPrefix << spec.to_json().dump() << '\n';
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << csv_field(t.header[i]);
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_field(row[i]);
    os << '\n';
  }
}

/// Runs fn(0..n-1) on up to `jobs` threads. Each index owns its output slot,
/// so results do not depend on scheduling. The first exception is rethrown.
inline void parallel_for(std::size_t n, unsigned jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

namespace detail {

inline Rng stream(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(master).split(a).split(b);
}

inline double linear_to_db(double p) { return 10.0 * std::log10(p); }

inline Table run_rate_curves(const ExperimentSpec& s, const RateCurvesParams& r, unsigned jobs) {
  const FadingModel model = r.model == "rayleigh" ? FadingModel::rayleigh(r.mean_b, r.mean_e)
                                                  : FadingModel::fully_correlated(r.mean_b);
  const std::size_t nr = r.rc.size();
  std::vector<RateSolution> cs(r.snr_db.size());
  std::vector<RateSolution> ce(r.snr_db.size() * nr);
  parallel_for(r.snr_db.size() * (nr + 1), jobs, [&](std::size_t idx) {
    const std::size_t i = idx / (nr + 1);
    const std::size_t j = idx % (nr + 1);
    const double p_bar = db_to_linear(r.snr_db[i]);
    const GridSpec grid = GridSpec::defaults(p_bar, r.r0_max, r.r0_step, r.p_points);
    Rng rng = stream(s.master_seed, i);  // same draws for C_s and every C_e column
    if (j == 0) cs[i] = optimize(Objective::KeyRateGeneral, model, p_bar, 0.0, grid, s.samples, rng);
    else ce[i * nr + j - 1] = optimize(Objective::ErasureCapacity, model, p_bar, r.rc[j - 1], grid, s.samples, rng);
  });
  Table t{{"snr_db", "rc", "cs", "ce", "std_err_cs", "std_err_ce", "cs_r0", "cs_p_db", "ce_r0", "ce_p_db"}, {}};
  for (std::size_t i = 0; i < r.snr_db.size(); ++i)
    for (std::size_t j = 0; j < nr; ++j) {
      const RateSolution& a = cs[i];
      const RateSolution& b = ce[i * nr + j];
      t.rows.push_back({fmt_num(r.snr_db[i]), fmt_num(r.rc[j]), fmt_num(a.value), fmt_num(b.value),
                        fmt_num(a.std_err), fmt_num(b.std_err), fmt_num(a.params.r0),
                        fmt_num(linear_to_db(a.params.p)), fmt_num(b.params.r0), fmt_num(linear_to_db(b.params.p))});
    }
  return t;
}

inline Table run_dumb_antenna(const ExperimentSpec& s, const DumbAntennaParams& d, unsigned jobs) {
  const double p_bar = db_to_linear(d.snr_db);
  const GridSpec grid = GridSpec::defaults(p_bar, d.r0_max, d.r0_step, d.p_points);
  const AntennaGains gains = d.gains == "line_of_sight" ? AntennaGains::LineOfSight : AntennaGains::CorrelatedRayleigh;
  std::vector<RateSolution> kr(d.n.size());
  std::vector<std::optional<DecorrelationStats>> rho(d.n.size());
  parallel_for(d.n.size(), jobs, [&](std::size_t i) {
    const auto n = static_cast<unsigned>(d.n[i]);
    Rng rng = stream(s.master_seed, i, 0);
    kr[i] = optimize(Objective::KeyRateGeneral, FadingModel::dumb_antenna(n, gains), p_bar, 0.0, grid, s.samples, rng);
    if (n >= 2) {
      Rng r2 = stream(s.master_seed, i, 1);
      rho[i] = decorrelation_stats(n, d.rho_trials, r2);
    }
  });
  const RateSolution indep = optimize_closed_form(ClosedForm::KeyRate, p_bar, 0.0, grid);
  Table t{{"n", "snr_db", "key_rate", "std_err", "r0", "p_db", "rho_mean", "rho_var", "rho_var_theory",
           "independent_key_rate"},
          {}};
  for (std::size_t i = 0; i < d.n.size(); ++i) {
    const double n = d.n[i];
    std::vector<std::string> row{fmt_num(n),           fmt_num(d.snr_db),  fmt_num(kr[i].value),
                                 fmt_num(kr[i].std_err), fmt_num(kr[i].params.r0),
                                 fmt_num(linear_to_db(kr[i].params.p))};
    if (rho[i]) {
      row.push_back(fmt_num(rho[i]->rho_mean));
      row.push_back(fmt_num(rho[i]->rho_var));
      row.push_back(fmt_num(1.0 / (n * (n - 1.0))));
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    row.push_back(fmt_num(indep.value));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Table run_temporal(const ExperimentSpec& s, const TemporalParams& tp, unsigned jobs) {
  const double p = db_to_linear(tp.snr_db);
  const auto rates = linear_rate_grid(tp.rate_step, tp.rate_max);
  const RateSolution stat = stationary_optimum(p, rates);
  Rng erng = stream(s.master_seed, 1'000'000);
  const RateSolution erg = ergodic_upper_bound(FadingModel::rayleigh(), p, tp.ergodic_samples, erng);
  EpisodeOptions opt;
  opt.burn_in = tp.burn_in;
  opt.grid_points = tp.grid_points;
  Table t{{"alpha", "snr_db", "frames", "burn_in", "seeds", "achieved_rate", "std_err", "stationary_optimum",
           "ergodic_bound", "ergodic_std_err", "degenerate_resets"},
          {}};
  for (double alpha : tp.alpha) {
    const AdaptModel model(alpha, p, rates, opt);
    std::vector<EpisodeResult> ep(s.seeds);
    parallel_for(s.seeds, jobs, [&](std::size_t k) {
      Rng rng = stream(s.master_seed, k);  // common across alpha values
      ep[k] = model.run(tp.frames, rng);
    });
    RunningStats acc;
    std::size_t resets = 0;
    for (const auto& e : ep) {
      acc.add(e.rate);
      resets += e.degenerate_resets;
    }
    // A single episode has no across-seed spread; fall back to its batch means.
    const double se = s.seeds > 1 ? acc.std_err() : ep.front().std_err;
    t.rows.push_back({fmt_num(alpha), fmt_num(tp.snr_db), fmt_count(tp.frames), fmt_count(tp.burn_in),
                      fmt_count(s.seeds), fmt_num(acc.mean()), fmt_num(se), fmt_num(stat.value), fmt_num(erg.value),
                      fmt_num(erg.std_err), fmt_count(resets)});
  }
  return t;
}

inline Table run_delay_limited(const ExperimentSpec& s, const DelayParams& d, unsigned jobs) {
  struct Point {
    DistillConfig cfg;
    double snr_db;
  };
  std::vector<Point> pts;
  for (double k : d.k)
    for (double r0 : d.r0)
      for (double snr : d.snr_db)
        for (double rc : d.rc)
          pts.push_back({{static_cast<unsigned>(k), r0, db_to_linear(snr), rc, d.frame_bits}, snr});
  std::vector<DistillResult> res(pts.size());
  parallel_for(pts.size(), jobs, [&](std::size_t i) {
    Rng rng = stream(s.master_seed, i);
    res[i] = simulate_distillation(pts[i].cfg, FrameErrorModel::capacity_threshold(), s.samples, rng);
  });
  Table t{{"k", "r0", "snr_db", "rc", "p_out_closed", "p_out_emp", "p_out_std_err", "rk_closed", "rk_emp",
           "rk_std_err", "mean_frames", "n0_closed"},
          {}};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& c = pts[i].cfg;
    t.rows.push_back({fmt_count(c.k), fmt_num(c.r0), fmt_num(pts[i].snr_db), fmt_num(c.rc),
                      fmt_num(outage_prob_closed_form(c)), fmt_num(res[i].outage.mean), fmt_num(res[i].outage.std_err),
                      fmt_num(key_rate_delay_limited(c)), fmt_num(res[i].key_rate.mean),
                      fmt_num(res[i].key_rate.std_err), fmt_num(res[i].mean_frames),
                      fmt_num(expected_transmissions(c))});
  }
  return t;
}

inline ExperimentOutput run_crown_secrecy(const ExperimentSpec& s, const CrownSecrecyParams& c, unsigned jobs) {
  ExperimentOutput out;
  out.table.header = {"gamma_ae", "gamma_be", "n_init", "n_data", "seeds", "mean_u", "std_err_u", "bound_u",
                      "p0_emp", "p0_std_err", "p0_closed", "mean_alarms", "mean_init_timeouts"};
  for (double gae : c.gamma_ae) {
    const double gbe = c.gamma_be.value_or(gae);
    for (double n_init : c.n_init) {
      SessionConfig cfg;
      cfg.width = c.width;
      cfg.n_init = static_cast<std::size_t>(n_init);
      cfg.n_data = c.n_data;
      cfg.links.alice_bob = LinkModel::bernoulli(c.gamma_ab, c.gamma_ba);
      cfg.links.alice_eve = LinkModel::bernoulli(gae);
      cfg.links.bob_eve = LinkModel::bernoulli(gbe, c.eve_ack_loss);
      std::vector<SessionMetrics> m(s.seeds);
      const bool trace_here = c.write_trace && !out.trace;
      parallel_for(s.seeds, jobs, [&](std::size_t k) {
        SessionConfig local = cfg;
        local.record_trace = trace_here && k == 0;
        SessionResult r = run_session(local, stream(s.master_seed, k));
        m[k] = r.metrics;
        if (local.record_trace) out.trace = std::move(r.trace);
      });
      RunningStats u;
      RunningStats alarms;
      RunningStats timeouts;
      std::size_t rec = 0;
      for (const auto& x : m) {
        u.add(static_cast<double>(x.useful));
        alarms.add(static_cast<double>(x.alarms));
        timeouts.add(static_cast<double>(x.init_timeouts));
        rec += x.v0_recovered;
      }
      const MeanEstimate p0 = proportion(rec, s.seeds);
      const std::size_t n = cfg.n_init;
      const double n_odd = std::ceil(static_cast<double>(n) / 2.0);
      const double p0c = std::pow(1.0 - gae, n_odd) * std::pow(1.0 - gbe, n_odd);
      const double bound =
          gae > 0.0 && gae == gbe ? expected_useful_bound(gae, 2 * static_cast<std::size_t>(n_odd),
                                                          2 * static_cast<std::size_t>(n_odd) + c.n_data)
                                  : std::nan("");
      out.table.rows.push_back({fmt_num(gae), fmt_num(gbe), fmt_count(n), fmt_count(c.n_data), fmt_count(s.seeds),
                                fmt_num(u.mean()), fmt_num(u.std_err()), fmt_num(bound), fmt_num(p0.mean),
                                fmt_num(p0.std_err), fmt_num(p0c), fmt_num(alarms.mean()), fmt_num(timeouts.mean())});
    }
  }
  return out;
}

inline AttackerScript random_attack(const std::string& kind, std::size_t n_data, Rng& rng) {
  // Frame 1 precedes any capture, so attacks start at frame 2.
  const std::size_t at = 2 + rng.below(n_data - 1);
  AttackerScript s;
  if (kind == "inject") s.actions.push_back(AttackAction::inject(at));
  else if (kind == "replay") s.actions.push_back(AttackAction::replay(at, 1 + rng.below(at - 1)));
  else s.actions.push_back(AttackAction::inject_ack(at));
  return s;
}

inline ExperimentOutput run_crown_attack(const ExperimentSpec& s, const CrownAttackParams& a, unsigned jobs) {
  ExperimentOutput out;
  out.table.header = {"attack", "width", "sessions", "detected", "undetected", "skipped", "undetected_frac",
                      "undetected_bound", "alarms", "replay_discards"};
  for (std::size_t ai = 0; ai < a.attacks.size(); ++ai) {
    const std::string& kind = a.attacks[ai];
    std::vector<SessionMetrics> m(s.seeds);
    const bool trace_here = a.write_trace && !out.trace;
    parallel_for(s.seeds, jobs, [&](std::size_t k) {
      Rng seed = stream(s.master_seed, ai, k);
      Rng script_rng = seed.split(99);
      SessionConfig cfg;
      cfg.width = a.width;
      cfg.n_init = a.n_init;
      cfg.n_data = a.n_data;
      cfg.links.alice_bob = LinkModel::bernoulli(a.gamma_ab, a.gamma_ba);
      cfg.links.alice_eve = LinkModel::bernoulli(a.gamma_ae);
      cfg.links.bob_eve = LinkModel::bernoulli(a.gamma_ae);
      cfg.false_accept = a.false_accept;
      cfg.attacker = random_attack(kind, a.n_data, script_rng);
      cfg.record_trace = trace_here && k == 0;
      SessionResult r = run_session(cfg, seed);
      m[k] = r.metrics;
      if (cfg.record_trace) out.trace = std::move(r.trace);
    });
    std::size_t det = 0, und = 0, skip = 0, alarms = 0, rd = 0;
    for (const auto& x : m) {
      det += x.attack_detected;
      und += x.attack_undetected;
      skip += x.attack_skipped;
      alarms += x.alarms;
      rd += x.honest_replay_discards;
    }
    const std::size_t tried = det + und;
    out.table.rows.push_back({kind, fmt_count(a.width), fmt_count(s.seeds), fmt_count(det), fmt_count(und),
                              fmt_count(skip), fmt_num(tried ? static_cast<double>(und) / tried : 0.0),
                              fmt_num(2.0 * std::ldexp(1.0, -static_cast<int>(a.width))), fmt_count(alarms),
                              fmt_count(rd)});
  }
  return out;
}

}  // namespace detail

/// Dispatches a validated spec; rows follow the sweep order for any `jobs`.
inline ExperimentOutput run_experiment(const ExperimentSpec& spec, unsigned jobs = 1) {
  ExperimentOutput out;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RateCurvesParams>) out.table = detail::run_rate_curves(spec, p, jobs);
        else if constexpr (std::is_same_v<T, DumbAntennaParams>) out.table = detail::run_dumb_antenna(spec, p, jobs);
        else if constexpr (std::is_same_v<T, TemporalParams>) out.table = detail::run_temporal(spec, p, jobs);
        else if constexpr (std::is_same_v<T, DelayParams>) out.table = detail::run_delay_limited(spec, p, jobs);
        else if constexpr (std::is_same_v<T, CrownSecrecyParams>) out = detail::run_crown_secrecy(spec, p, jobs);
        else if constexpr (std::is_same_v<T, CrownAttackParams>) out = detail::run_crown_attack(spec, p, jobs);
      },
      spec.params);
  return out;
}

/// Aggregate CrownSecrecy-style rows for an arbitrary session config.
struct ReplayAggregate {
  MeanEstimate useful;
  MeanEstimate v0_recovered;
  MeanEstimate alarms;
  std::size_t sessions = 0;
};

inline ReplayAggregate replay_experiment(const SessionConfig& cfg, std::uint64_t master_seed, std::size_t seeds,
                                         unsigned jobs = 1) {
  cfg.validate();
  detail::require(seeds >= 1, "replay_experiment: need at least one seed");
  std::vector<SessionMetrics> m(seeds);
  parallel_for(seeds, jobs, [&](std::size_t k) { m[k] = run_session(cfg, detail::stream(master_seed, k)).metrics; });
  RunningStats u, a;
  std::size_t rec = 0;
  for (const auto& x : m) {
    u.add(static_cast<double>(x.useful));
    a.add(static_cast<double>(x.alarms));
    rec += x.v0_recovered;
  }
  return {u.estimate(), proportion(rec, seeds), a.estimate(), seeds};
}

}  // namespace arqsec
