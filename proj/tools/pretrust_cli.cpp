#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pretrust/pretrust.hpp"

namespace {

enum class LogLevel { quiet, info, trace };

LogLevel log_level() {
  const char* env = std::getenv("PRETRUST_LOG");
  if (env == nullptr) return LogLevel::info;
  std::string v(env);
  if (v == "quiet") return LogLevel::quiet;
  if (v == "trace") return LogLevel::trace;
  return LogLevel::info;
}

void log_info(const std::string& msg) {
  if (log_level() != LogLevel::quiet) std::cerr << "[pretrust] " << msg << '\n';
}

pretrust::Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw pretrust::ConfigError("cannot open " + path);
  try {
    return pretrust::Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw pretrust::ConfigError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw pretrust::ConfigError("cannot write " + path);
  out << text;
}

struct RunArgs {
  std::string config;
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string out = "-";
  std::string snapshot;
};

int do_run(const RunArgs& a) {
  pretrust::SimConfig cfg;
  if (!a.config.empty() && !a.scenario.empty())
    throw pretrust::ConfigError("give either --config or --scenario, not both");
  if (!a.config.empty())
    cfg = pretrust::sim_config_from_json(read_json_file(a.config));
  else if (!a.scenario.empty())
    cfg = pretrust::builtin_scenario(a.scenario);
  else
    throw pretrust::ConfigError("run needs --config <file> or --scenario <name>");
  if (a.seed) cfg.seed = *a.seed;

  pretrust::TraceSink trace;
  if (log_level() == LogLevel::trace)
    trace = [](pretrust::SimTime t, const std::string& label) {
      std::cerr << "[trace] t=" << t << "ms " << label << '\n';
    };
  pretrust::Simulation sim(cfg, trace);
  log_info("running scenario " + cfg.scenario + " seed " + std::to_string(cfg.seed));
  try {
    sim.run();
  } catch (const pretrust::InvariantViolation& v) {
    std::cerr << "invariant violation: " << v.what() << '\n';
    if (!a.snapshot.empty()) write_text(a.snapshot, pretrust::snapshot_json(sim).dump(2) + "\n");
    return 1;
  }
  write_text(a.out, pretrust::metrics_jsonl(sim.metrics()));
  if (!a.snapshot.empty()) write_text(a.snapshot, pretrust::snapshot_json(sim).dump(2) + "\n");
  log_info("done: " + std::to_string(sim.metrics().events) + " events, audit " + sim.metrics().audit);
  return 0;
}

int do_audit(const std::string& path) {
  auto snap = pretrust::snapshot_from_json(read_json_file(path));
  if (auto v = pretrust::audit_snapshot(snap)) {
    std::cout << "FAIL " << v->invariant << ": " << v->detail << '\n';
    return 1;
  }
  std::cout << "PASS\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PRETRUST payment protocol simulator"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run a scenario and write metrics as JSON lines");
  run->add_option("--config", run_args.config, "scenario config JSON file");
  run->add_option("--scenario", run_args.scenario, "built-in scenario name");
  run->add_option("--seed", run_args.seed, "override the config seed");
  run->add_option("--out", run_args.out, "metrics output file, - for stdout")->capture_default_str();
  run->add_option("--snapshot", run_args.snapshot, "write the final state snapshot here");

  std::string show;
  auto* scenarios = app.add_subcommand("scenarios", "list built-in scenarios");
  scenarios->add_option("--show", show, "print the config JSON of one scenario");

  std::string state;
  auto* audit = app.add_subcommand("audit", "re-run conservation and chain-integrity checks");
  audit->add_option("--state", state, "snapshot JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*run) return do_run(run_args);
    if (*scenarios) {
      if (!show.empty()) {
        std::cout << pretrust::to_json(pretrust::builtin_scenario(show)).dump(2) << '\n';
        return 0;
      }
      for (auto name : pretrust::kScenarioNames) std::cout << name << '\n';
      return 0;
    }
    if (*audit) return do_audit(state);
  } catch (const pretrust::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const pretrust::DecodeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const pretrust::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
