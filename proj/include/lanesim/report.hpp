#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lanesim/common.hpp"
#include "lanesim/config.hpp"
#include "lanesim/csv.hpp"
#include "lanesim/metrics.hpp"
#include "lanesim/outputs.hpp"

namespace lanesim {

/// Scalars extracted from one run, the inputs to the cross-seed report.
struct RunMetrics {
  double penetration = 0.0;
  uint64_t seed = 0;
  double lane_changes_total = 0.0;
  double av_lc_share = 0.0;
  double travel_time_mean_s = 0.0;
  double travel_time_cv_s = 0.0;
  double travel_time_av_s = 0.0;
  double mean_space_speed_mps = 0.0;
  double qmax_literal = 0.0;
  double k0_literal = 0.0;
  double qmax_length_weighted = 0.0;
  double k0_length_weighted = 0.0;
  double removed_stuck_share = 0.0;
};

inline RunMetrics summarize_run(const RunOutput& out, const std::vector<MfdPoint>& mfd,
                                double penetration, uint64_t seed) {
  RunMetrics m;
  m.penetration = penetration;
  m.seed = seed;
  m.lane_changes_total = static_cast<double>(out.lane_changes.size());
  if (!out.lane_changes.empty()) {
    size_t av = 0;
    for (const auto& r : out.lane_changes)
      if (r.vehicle_class == VehicleClass::av) ++av;
    m.av_lc_share = static_cast<double>(av) / static_cast<double>(out.lane_changes.size());
  } else {
    m.av_lc_share = penetration;  // no maneuvers: neutral value on the diagonal
  }

  const TravelTimeSummary tts = travel_time_summary(out.trips);
  m.travel_time_mean_s = tts.mean_all;
  m.travel_time_cv_s = tts.mean_cv;
  m.travel_time_av_s = tts.mean_av;

  double speed_num = 0.0, speed_den = 0.0;
  for (const auto& e : out.edge_measures) {
    speed_num += e.mean_speed * e.mean_count;
    speed_den += e.mean_count;
  }
  m.mean_space_speed_mps = speed_den > 0.0 ? speed_num / speed_den : 0.0;

  if (!mfd.empty()) {
    const CriticalPoint lit = critical_point(mfd, FlowMode::literal);
    const CriticalPoint lw = critical_point(mfd, FlowMode::length_weighted);
    m.qmax_literal = lit.q_max;
    m.k0_literal = lit.k_0;
    m.qmax_length_weighted = lw.q_max;
    m.k0_length_weighted = lw.k_0;
  }
  if (out.counters.inserted > 0)
    m.removed_stuck_share = static_cast<double>(out.counters.removed_stuck) /
                            static_cast<double>(out.counters.inserted);
  return m;
}

struct ReportRow {
  double penetration = 0.0;
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;
  std::optional<double> rel_change_vs_0;
};

/// Cross-seed aggregation per penetration level: mean and sample sd of each
/// metric, relative change against the 0% group mean, plus a Spearman rank
/// correlation of seed-mean q_max (length-weighted) against penetration as the
/// monotone-trend statistic. Throws MissingBaseline without a 0% group.
inline std::vector<ReportRow> scenario_report(const std::vector<RunMetrics>& runs) {
  if (runs.empty()) throw MissingBaseline("no runs to report on");
  std::map<double, std::vector<const RunMetrics*>> groups;
  for (const auto& r : runs) groups[r.penetration].push_back(&r);
  if (!groups.count(0.0)) throw MissingBaseline("no 0% penetration group for relative metrics");

  struct MetricDef {
    std::string name;
    double RunMetrics::* field;
  };
  const std::vector<MetricDef> defs = {
      {"lane_changes_total", &RunMetrics::lane_changes_total},
      {"av_lc_share", &RunMetrics::av_lc_share},
      {"travel_time_mean_s", &RunMetrics::travel_time_mean_s},
      {"travel_time_cv_s", &RunMetrics::travel_time_cv_s},
      {"travel_time_av_s", &RunMetrics::travel_time_av_s},
      {"mean_space_speed_mps", &RunMetrics::mean_space_speed_mps},
      {"qmax_literal", &RunMetrics::qmax_literal},
      {"k0_literal", &RunMetrics::k0_literal},
      {"qmax_length_weighted", &RunMetrics::qmax_length_weighted},
      {"k0_length_weighted", &RunMetrics::k0_length_weighted},
      {"removed_stuck_share", &RunMetrics::removed_stuck_share},
  };

  std::map<std::string, double> baseline;
  for (const auto& def : defs) {
    std::vector<double> xs;
    for (const RunMetrics* r : groups.at(0.0)) xs.push_back(r->*(def.field));
    baseline[def.name] = mean_sd(xs).mean;
  }

  std::vector<ReportRow> rows;
  for (const auto& [pen, members] : groups) {
    for (const auto& def : defs) {
      std::vector<double> xs;
      for (const RunMetrics* r : members) xs.push_back(r->*(def.field));
      const MeanSd stat = mean_sd(xs);
      ReportRow row;
      row.penetration = pen;
      row.metric = def.name;
      row.mean = stat.mean;
      row.sd = stat.sd;
      const double base = baseline.at(def.name);
      if (base != 0.0) row.rel_change_vs_0 = (stat.mean - base) / base;
      rows.push_back(std::move(row));
    }
  }

  if (groups.size() >= 2) {
    std::vector<double> pens, qmaxes;
    for (const auto& [pen, members] : groups) {
      std::vector<double> xs;
      for (const RunMetrics* r : members) xs.push_back(r->qmax_length_weighted);
      pens.push_back(pen);
      qmaxes.push_back(mean_sd(xs).mean);
    }
    ReportRow row;
    row.penetration = -1.0;  // written as "all"
    row.metric = "spearman_qmax_lw_vs_penetration";
    row.mean = spearman_rho(pens, qmaxes);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_report_csv(const std::vector<ReportRow>& rows,
                             const std::filesystem::path& path) {
  CsvWriter w(path);
  w.row({"penetration", "metric", "mean", "sd", "rel_change_vs_0"});
  for (const auto& r : rows) {
    w.row({r.penetration < 0.0 ? "all" : num_str(r.penetration), r.metric, num_str(r.mean),
           num_str(r.sd), r.rel_change_vs_0 ? num_str(*r.rel_change_vs_0) : ""});
  }
}

// --- MFD file I/O --------------------------------------------------------------

inline void write_mfd_csv(const std::vector<MfdPoint>& points,
                          const std::filesystem::path& path) {
  CsvWriter w(path);
  w.row({"interval", "K", "Q_literal", "Q_length_weighted", "phase"});
  for (const auto& p : points)
    w.row({num_str(p.interval_start), num_str(p.density), num_str(p.flow_literal),
           num_str(p.flow_length_weighted), to_string(p.phase)});
}

inline std::vector<MfdPoint> read_mfd_csv(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  std::vector<MfdPoint> points;
  for (const auto& row : t.rows) {
    MfdPoint p;
    p.interval_start = parse_double(row[0], "mfd csv");
    p.density = parse_double(row[1], "mfd csv");
    p.flow_literal = parse_double(row[2], "mfd csv");
    p.flow_length_weighted = parse_double(row[3], "mfd csv");
    p.phase = mfd_phase_from_string(row[4]);
    points.push_back(p);
  }
  return points;
}

// --- Run directory layout --------------------------------------------------------

inline std::string scenario_tag(double penetration) {
  return strfmt("p%03d", static_cast<int>(std::lround(penetration * 100.0)));
}

inline std::string run_dir_name(double penetration, uint64_t seed) {
  return strfmt("%s_s%04llu", scenario_tag(penetration).c_str(),
                static_cast<unsigned long long>(seed));
}

inline std::string mfd_file_name(double penetration, uint64_t seed) {
  return strfmt("mfd_%s_s%04llu.csv", scenario_tag(penetration).c_str(),
                static_cast<unsigned long long>(seed));
}

/// Loads one run directory back into metrics form. Throws if any artifact is
/// missing or malformed, naming the directory.
inline RunMetrics load_run_metrics(const std::filesystem::path& dir) {
  try {
    std::ifstream cf(dir / "resolved_config.json");
    if (!cf) throw ParseError("missing resolved_config.json");
    json jc;
    cf >> jc;
    const double pen = jc.at("fleet").at("av_penetration").get<double>();
    const auto seed = jc.at("engine").at("seed").get<uint64_t>();
    const RunOutput out = load_run_output(dir);
    const auto mfd = read_mfd_csv(dir / mfd_file_name(pen, seed));
    return summarize_run(out, mfd, pen, seed);
  } catch (const std::exception& ex) {
    throw ParseError("corrupt run directory '" + dir.string() + "': " + ex.what());
  }
}

/// True for names following the run-directory pattern p###_s####.
inline bool is_run_dir_name(const std::string& name) {
  if (name.size() < 6 || name[0] != 'p') return false;
  size_t i = 1;
  while (i < name.size() && std::isdigit(static_cast<unsigned char>(name[i]))) ++i;
  return i == 4 && name.compare(i, 2, "_s") == 0;
}

/// All run directories under `runs_dir`, sorted by name for deterministic
/// aggregation.
inline std::vector<std::filesystem::path> list_run_dirs(const std::filesystem::path& runs_dir) {
  std::vector<std::filesystem::path> dirs;
  if (!std::filesystem::is_directory(runs_dir))
    throw ParseError("runs directory '" + runs_dir.string() + "' does not exist");
  for (const auto& entry : std::filesystem::directory_iterator(runs_dir)) {
    if (entry.is_directory() && is_run_dir_name(entry.path().filename().string()))
      dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

/// Recomputes report.csv from the serialized artifacts under `runs_dir`.
inline std::vector<ReportRow> report_from_directory(const std::filesystem::path& runs_dir) {
  std::vector<RunMetrics> metrics;
  for (const auto& dir : list_run_dirs(runs_dir)) metrics.push_back(load_run_metrics(dir));
  if (metrics.empty()) throw MissingBaseline("no run directories under '" + runs_dir.string() + "'");
  return scenario_report(metrics);
}

}  // namespace lanesim
