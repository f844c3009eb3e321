#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "lanesim/common.hpp"
#include "lanesim/config.hpp"
#include "lanesim/engine.hpp"
#include "lanesim/report.hpp"
#include "lanesim/svg.hpp"

namespace lanesim {

/// Penetration-rate sweep: the base scenario crossed with a penetration list
/// and a block of seeds. Runs 20 seeds by default on the real-shaped profile
/// and 25 on the inflated one.
struct SweepSpec {
  ScenarioConfig base;
  std::vector<double> penetrations = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int seeds = 0;  // 0: profile-dependent default
  uint64_t seed_base = 1;

  int resolved_seeds() const {
    if (seeds > 0) return seeds;
    return base.profile.kind == ProfileKind::inflated ? 25 : 20;
  }

  void validate() const {
    base.validate();
    if (penetrations.empty()) throw ConfigError("sweep needs at least one penetration level");
    for (double p : penetrations) {
      FleetMix probe = base.fleet;
      probe.av_penetration = p;
      probe.validate();
    }
    if (seeds < 0) throw ConfigError("sweep seeds must be >= 1");
  }
};

inline SweepSpec sweep_spec_from_json(const json& doc) {
  SweepSpec spec;
  spec.base = scenario_config_from_json(doc);
  if (doc.contains("sweep")) {
    const json& js = doc.at("sweep");
    if (js.contains("penetrations"))
      spec.penetrations = js.at("penetrations").get<std::vector<double>>();
    spec.seeds = js.value("seeds", spec.seeds);
    spec.seed_base = js.value("seed_base", spec.seed_base);
  }
  spec.validate();
  return spec;
}

inline SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sweep spec '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& ex) {
    throw ConfigError("sweep spec '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return sweep_spec_from_json(doc);
}

/// Executes one configured run and serializes everything the report needs into
/// `dir`: the four RunOutput files, the resolved config and the MFD series.
inline void execute_run(const RoadNetwork& net, const ScenarioConfig& cfg,
                        const std::filesystem::path& dir) {
  const RunOutput out = run_scenario(net, cfg);
  std::filesystem::create_directories(dir);
  save_run_output(out, dir);
  save_resolved_config(cfg, dir / "resolved_config.json");
  const auto mfd = build_mfd(out, net);
  write_mfd_csv(mfd, dir / mfd_file_name(cfg.fleet.av_penetration, cfg.engine.seed));
}

struct SweepResult {
  std::vector<std::filesystem::path> run_dirs;
  std::vector<std::string> failures;  // "dir: message"
};

/// Runs |penetrations| x seeds independent scenarios, dispatching up to `jobs`
/// concurrently. Each task gets a private config copy and its own output
/// directory, so results are byte-identical for any parallelism degree.
inline SweepResult run_sweep(const SweepSpec& spec, int jobs,
                             const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const RoadNetwork net = spec.base.network.build();

  struct Task {
    double penetration;
    uint64_t seed;
    std::filesystem::path dir;
  };
  std::vector<Task> tasks;
  const int n_seeds = spec.resolved_seeds();
  for (double p : spec.penetrations)
    for (int s = 0; s < n_seeds; ++s) {
      const uint64_t seed = spec.seed_base + static_cast<uint64_t>(s);
      tasks.push_back({p, seed, out_dir / run_dir_name(p, seed)});
    }

  SweepResult result;
  for (const auto& t : tasks) result.run_dirs.push_back(t.dir);

  std::atomic<size_t> next{0};
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      try {
        ScenarioConfig cfg = spec.base;
        cfg.fleet.av_penetration = task.penetration;
        cfg.engine.seed = task.seed;
        execute_run(net, cfg, task.dir);
        log_info(strfmt("run %s done", task.dir.filename().string().c_str()));
      } catch (const std::exception& ex) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        result.failures.push_back(task.dir.string() + ": " + ex.what());
      }
    }
  };

  const int n_threads = std::max(1, jobs);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_threads));
  for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return result;
}

// --- Plots ---------------------------------------------------------------------

/// Emits the report figures as static SVG files: relative lane-change counts,
/// AV share against the penetration diagonal, travel-time/speed relative
/// change, and one flow-density scatter per penetration level with the
/// loading/unloading branches colored.
inline void emit_plots(const std::filesystem::path& runs_dir,
                       const std::filesystem::path& plot_dir) {
  std::filesystem::create_directories(plot_dir);
  const auto rows = report_from_directory(runs_dir);

  auto series_of = [&](const std::string& metric, bool relative) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : rows) {
      if (r.metric != metric || r.penetration < 0.0) continue;
      if (relative) {
        if (r.rel_change_vs_0) pts.push_back({r.penetration * 100.0, *r.rel_change_vs_0 * 100.0});
      } else {
        pts.push_back({r.penetration * 100.0, r.mean * 100.0});
      }
    }
    return pts;
  };

  {
    SvgChart chart("Lane-changing maneuvers vs baseline", "AV penetration [%]",
                   "relative change [%]");
    chart.add_bars(series_of("lane_changes_total", true), "#1f77b4");
    chart.save(plot_dir / "lane_change_relative.svg");
  }
  {
    SvgChart chart("Share of maneuvers performed by AVs", "AV penetration [%]",
                   "AV lane-change share [%]");
    SvgSeries diag;
    diag.label = "penetration diagonal";
    diag.color = "#999999";
    diag.points = {{0.0, 0.0}, {100.0, 100.0}};
    diag.marks = false;
    chart.add_series(diag);
    SvgSeries share;
    share.label = "AV share";
    share.color = "#d62728";
    share.points = series_of("av_lc_share", false);
    chart.add_series(share);
    chart.save(plot_dir / "av_share_diagonal.svg");
  }
  {
    SvgChart chart("Efficiency vs baseline", "AV penetration [%]", "relative change [%]");
    SvgSeries tt;
    tt.label = "mean travel time";
    tt.color = "#d62728";
    tt.points = series_of("travel_time_mean_s", true);
    chart.add_series(tt);
    SvgSeries sp;
    sp.label = "mean space speed";
    sp.color = "#1f77b4";
    sp.points = series_of("mean_space_speed_mps", true);
    chart.add_series(sp);
    chart.save(plot_dir / "efficiency_relative.svg");
  }

  // Flow-density scatter per penetration, all seeds pooled.
  std::map<std::string, std::pair<SvgSeries, SvgSeries>> mfd_by_scenario;
  for (const auto& dir : list_run_dirs(runs_dir)) {
    const std::string name = dir.filename().string();
    const std::string tag = name.substr(0, name.find('_'));
    std::vector<MfdPoint> points;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      const std::string fn = entry.path().filename().string();
      if (fn.rfind("mfd_", 0) == 0 && entry.path().extension() == ".csv") {
        auto part = read_mfd_csv(entry.path());
        points.insert(points.end(), part.begin(), part.end());
      }
    }
    if (points.empty()) throw ParseError("no MFD points in run directory '" + dir.string() + "'");
    auto& [loading, unloading] = mfd_by_scenario[tag];
    loading.label = "loading";
    loading.color = "#1f77b4";
    loading.line = false;
    unloading.label = "unloading";
    unloading.color = "#ff7f0e";
    unloading.line = false;
    for (const auto& p : points) {
      auto& s = p.phase == MfdPhase::loading ? loading : unloading;
      s.points.push_back({p.density, p.flow_length_weighted});
    }
  }
  for (auto& [tag, pair] : mfd_by_scenario) {
    SvgChart chart("Flow-density diagram, scenario " + tag, "K [veh/km]", "Q [veh/h/lane]");
    chart.add_series(pair.first);
    chart.add_series(pair.second);
    chart.save(plot_dir / ("mfd_" + tag + ".svg"));
  }
}

}  // namespace lanesim
