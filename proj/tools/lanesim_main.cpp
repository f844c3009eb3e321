#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "lanesim/lanesim.hpp"

namespace fs = std::filesystem;
using namespace lanesim;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

int cmd_run(const std::string& config_path, uint64_t seed, bool seed_given,
            const std::string& out_dir) {
  ScenarioConfig cfg;
  try {
    cfg = load_scenario_config(config_path);
    if (seed_given) cfg.engine.seed = seed;
  } catch (const std::exception& ex) {
    log_error(ex.what());
    return kExitConfig;
  }
  try {
    const RoadNetwork net = cfg.network.build();
    execute_run(net, cfg, out_dir);
    log_info("run written to " + out_dir);
  } catch (const ParseError& ex) {
    log_error(ex.what());
    return kExitConfig;
  } catch (const ConfigError& ex) {
    log_error(ex.what());
    return kExitConfig;
  } catch (const std::exception& ex) {
    log_error(ex.what());
    return kExitRuntime;
  }
  return 0;
}

int cmd_sweep(const std::string& spec_path, int jobs, const std::string& out_dir) {
  SweepSpec spec;
  try {
    spec = load_sweep_spec(spec_path);
  } catch (const std::exception& ex) {
    log_error(ex.what());
    return kExitConfig;
  }
  try {
    const SweepResult result = run_sweep(spec, jobs, out_dir);
    if (!result.failures.empty()) {
      for (const auto& f : result.failures) log_error("run failed: " + f);
      return kExitRuntime;
    }
    const auto rows = report_from_directory(out_dir);
    write_report_csv(rows, fs::path(out_dir) / "report.csv");
    emit_plots(out_dir, fs::path(out_dir) / "plots");
    log_info("sweep report written to " + (fs::path(out_dir) / "report.csv").string());
  } catch (const std::exception& ex) {
    log_error(ex.what());
    return kExitRuntime;
  }
  return 0;
}

int cmd_report(const std::string& runs_dir) {
  try {
    const auto rows = report_from_directory(runs_dir);
    write_report_csv(rows, fs::path(runs_dir) / "report.csv");
    log_info("report written to " + (fs::path(runs_dir) / "report.csv").string());
  } catch (const std::exception& ex) {
    log_error(ex.what());
    return kExitRuntime;
  }
  return 0;
}

int cmd_plot(const std::string& runs_dir, const std::string& out_dir) {
  try {
    emit_plots(runs_dir, out_dir);
    log_info("plots written to " + out_dir);
  } catch (const std::exception& ex) {
    log_error(ex.what());
    return kExitRuntime;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lanesim - microscopic traffic simulator for automated lane-changing studies"};
  app.require_subcommand(1);

  std::string config_path, out_dir, spec_path, runs_dir, plot_out;
  uint64_t seed = 0;
  int jobs = 1;

  auto* run = app.add_subcommand("run", "execute one scenario run");
  run->add_option("--config", config_path, "scenario config JSON")->required();
  auto* seed_opt = run->add_option("--seed", seed, "override engine.seed");
  run->add_option("--out", out_dir, "output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "run a penetration-rate sweep");
  sweep->add_option("--spec", spec_path, "sweep spec JSON")->required();
  sweep->add_option("--jobs", jobs, "max concurrent runs")->default_val(1);
  sweep->add_option("--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand("report", "recompute report.csv from saved runs");
  report->add_option("--runs", runs_dir, "directory of run subdirectories")->required();

  auto* plot = app.add_subcommand("plot", "emit SVG figures from saved runs");
  plot->add_option("--runs", runs_dir, "directory of run subdirectories")->required();
  plot->add_option("--out", plot_out, "directory for SVG output")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) return cmd_run(config_path, seed, seed_opt->count() > 0, out_dir);
  if (sweep->parsed()) return cmd_sweep(spec_path, jobs, out_dir);
  if (report->parsed()) return cmd_report(runs_dir);
  if (plot->parsed()) return cmd_plot(runs_dir, plot_out);
  return kExitConfig;
}
