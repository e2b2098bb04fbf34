// arqsec: experiment runner.
//
//   arqsec run --config <file> [--output <csv>] [--jobs K] [--seed-override S]
//   arqsec validate --config <file>
//
// Exit codes: 0 success, 2 config error, 3 runtime error. Errors are printed to
// stderr as one JSON object per line. ARQSEC_LOG selects error|info|debug.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "arqsec/experiment.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

void emit_error(const std::string& kind, const std::string& field, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind;
  if (!field.empty()) j["field"] = field;
  j["message"] = message;
  std::cerr << j.dump() << '\n';
}

bool setup_logging() {
  auto logger = spdlog::stderr_color_mt("arqsec");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("ARQSEC_LOG");
  const std::string level = env ? env : "error";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "info") spdlog::set_level(spdlog::level::info);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else {
    emit_error("config", "ARQSEC_LOG", "expected error, info or debug, got '" + level + "'");
    return false;
  }
  return true;
}

// Reads and validates; prints every issue. Returns nullopt on failure.
std::optional<arqsec::ExperimentSpec> load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    emit_error("config", "config", "cannot read '" + path + "'");
    return std::nullopt;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  arqsec::ValidationResult v = arqsec::validate_text(ss.str());
  for (const auto& issue : v.issues) emit_error("config", issue.field, issue.message);
  return v.spec;
}

class TempFile {
 public:
  explicit TempFile(std::filesystem::path final_path)
      : final_(std::move(final_path)), tmp_(final_.string() + ".tmp") {}
  ~TempFile() {
    std::error_code ec;
    if (!committed_) std::filesystem::remove(tmp_, ec);
  }
  const std::filesystem::path& tmp() const { return tmp_; }
  void commit() {
    std::filesystem::rename(tmp_, final_);
    committed_ = true;
  }

 private:
  std::filesystem::path final_;
  std::filesystem::path tmp_;
  bool committed_ = false;
};

int do_run(const std::string& config, std::string output, unsigned jobs, std::optional<std::uint64_t> seed) {
  auto spec = load(config);
  if (!spec) return kConfigError;
  if (seed) spec->master_seed = *seed;
  if (!output.empty()) spec->output = output;
  if (spec->output.empty()) {
    emit_error("config", "output", "no output path: set `output` in the config or pass --output");
    return kConfigError;
  }
  if (jobs == 0) {
    emit_error("config", "jobs", "--jobs must be >= 1");
    return kConfigError;
  }
  const std::filesystem::path out_path(spec->output);
  const std::filesystem::path trace_path(spec->output + ".trace.jsonl");
  spdlog::info("running {} (seed {}) -> {}", arqsec::to_string(spec->kind), spec->master_seed, spec->output);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    // Stale outputs from an earlier run must not survive a failed one.
    std::filesystem::remove(out_path);
    std::filesystem::remove(trace_path);
    TempFile csv(out_path);
    const arqsec::ExperimentOutput result = arqsec::run_experiment(*spec, jobs);
    {
      std::ofstream os(csv.tmp(), std::ios::binary);
      arqsec::write_csv(os, *spec, result.table);
      if (!os) throw std::runtime_error("write failed: " + csv.tmp().string());
    }
    if (result.trace) {
      TempFile tr(trace_path);
      {
        std::ofstream os(tr.tmp(), std::ios::binary);
        result.trace->write_jsonl(os);
        if (!os) throw std::runtime_error("write failed: " + tr.tmp().string());
      }
      tr.commit();
    }
    csv.commit();
  } catch (const arqsec::ConfigError& e) {
    emit_error("config", "", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::error_code ec;
    std::filesystem::remove(trace_path, ec);
    emit_error("runtime", "", e.what());
    return kRuntimeError;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("done in {:.2f} s", secs);
  return 0;
}

int do_validate(const std::string& config) {
  auto spec = load(config);
  if (!spec) return kConfigError;
  nlohmann::ordered_json j;
  j["status"] = "ok";
  j["spec"] = spec->to_json();
  std::cout << j.dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (!setup_logging()) return kConfigError;

  CLI::App app{"ARQ secret-key experiment runner"};
  app.require_subcommand(1);

  std::string config;
  std::string output;
  unsigned jobs = 1;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "run an experiment and write its CSV");
  run->add_option("--config", config, "experiment config file")->required();
  run->add_option("--output", output, "output CSV path (overrides the config)");
  run->add_option("--jobs", jobs, "worker threads");
  auto* seed_opt = run->add_option("--seed-override", seed, "replace master_seed");

  std::string vconfig;
  auto* validate = app.add_subcommand("validate", "check a config and print the parsed spec");
  validate->add_option("--config", vconfig, "experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("usage", "", e.what());
    return kConfigError;
  }

  if (*run) return do_run(config, output, jobs, seed_opt->count() ? std::optional(seed) : std::nullopt);
  return do_validate(vconfig);
}
