#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanesim/common.hpp"
#include "lanesim/csv.hpp"
#include "lanesim/dynamics.hpp"

namespace lanesim {

/// Per-edge aggregate over one measurement interval. N is the time-average of
/// the instantaneous on-edge vehicle count; v the vehicle-time-weighted mean of
/// instantaneous speeds (a space-mean-speed estimate); k = N / edge length.
struct EdgeMeasure {
  double interval_start = 0.0;  // s
  std::string edge;
  double mean_speed = 0.0;  // v_i, m/s
  double mean_count = 0.0;  // N_i, vehicles
  double density = 0.0;     // k_i, veh/m
};

/// One completed continuous lane change, logged when the maneuver began.
struct LaneChangeRecord {
  double time = 0.0;
  uint32_t vehicle = 0;
  VehicleClass vehicle_class = VehicleClass::cv;
  DrivingStyle style = DrivingStyle::moderate;
  std::string edge;
  int from_lane = 0;
  int to_lane = 0;
  LaneChangeReason reason = LaneChangeReason::strategic;
};

struct TripRecord {
  uint32_t vehicle = 0;
  VehicleClass vehicle_class = VehicleClass::cv;
  DrivingStyle style = DrivingStyle::moderate;
  double depart = 0.0;  // network entry time, s
  double arrive = 0.0;  // exit / removal / horizon time, s
  bool completed = false;

  double travel_time() const { return arrive - depart; }
};

struct RunCounters {
  uint64_t inserted = 0;
  uint64_t arrived = 0;
  uint64_t removed_stuck = 0;
  uint64_t insertion_denied = 0;
  uint64_t unroutable = 0;
  uint64_t active_at_end = 0;
};

/// Invariant violations observed by the optional per-step checker.
struct RunViolations {
  uint64_t ordering = 0;
  uint64_t red_crossing = 0;
  uint64_t conservation = 0;
};

struct RunOutput {
  std::vector<LaneChangeRecord> lane_changes;
  std::vector<EdgeMeasure> edge_measures;
  std::vector<TripRecord> trips;
  RunCounters counters;
  RunViolations violations;
  double measure_interval_s = 900.0;
  /// Realized departure schedule per measurement interval.
  std::vector<uint64_t> scheduled_departures_per_interval;
  /// Configured demand inflow per interval (veh/h, before Poisson sampling);
  /// drives the MFD loading/unloading split when present.
  std::vector<double> demand_rate_per_interval;
};

// --- Serialization -----------------------------------------------------------

inline void save_run_output(const RunOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvWriter w(dir / "lane_changes.csv");
    w.row({"time", "vehicle", "class", "style", "edge", "from_lane", "to_lane", "reason"});
    for (const auto& r : out.lane_changes)
      w.row({num_str(r.time), std::to_string(r.vehicle), to_string(r.vehicle_class),
             to_string(r.style), r.edge, std::to_string(r.from_lane), std::to_string(r.to_lane),
             to_string(r.reason)});
  }
  {
    CsvWriter w(dir / "edges.csv");
    w.row({"interval_start", "edge", "mean_speed_mps", "mean_count", "density_veh_per_m"});
    for (const auto& m : out.edge_measures)
      w.row({num_str(m.interval_start), m.edge, num_str(m.mean_speed), num_str(m.mean_count),
             num_str(m.density)});
  }
  {
    CsvWriter w(dir / "trips.csv");
    w.row({"vehicle", "class", "style", "depart", "arrive", "travel_time_s", "completed"});
    for (const auto& t : out.trips)
      w.row({std::to_string(t.vehicle), to_string(t.vehicle_class), to_string(t.style),
             num_str(t.depart), num_str(t.arrive), num_str(t.travel_time()),
             t.completed ? "1" : "0"});
  }
  {
    nlohmann::json j;
    j["inserted"] = out.counters.inserted;
    j["arrived"] = out.counters.arrived;
    j["removed_stuck"] = out.counters.removed_stuck;
    j["insertion_denied"] = out.counters.insertion_denied;
    j["unroutable"] = out.counters.unroutable;
    j["active_at_end"] = out.counters.active_at_end;
    j["measure_interval_s"] = out.measure_interval_s;
    j["scheduled_departures_per_interval"] = out.scheduled_departures_per_interval;
    j["demand_rate_per_interval"] = out.demand_rate_per_interval;
    j["violations"] = {{"ordering", out.violations.ordering},
                       {"red_crossing", out.violations.red_crossing},
                       {"conservation", out.violations.conservation}};
    std::ofstream f(dir / "counters.json");
    if (!f) throw Error("cannot write '" + (dir / "counters.json").string() + "'");
    f << j.dump(2) << "\n";
  }
}

inline RunOutput load_run_output(const std::filesystem::path& dir) {
  RunOutput out;
  {
    CsvTable t = read_csv(dir / "lane_changes.csv");
    for (const auto& row : t.rows) {
      LaneChangeRecord r;
      r.time = parse_double(row[0], "lane_changes.csv");
      r.vehicle = static_cast<uint32_t>(parse_int(row[1], "lane_changes.csv"));
      r.vehicle_class = vehicle_class_from_string(row[2]);
      r.style = style_from_string(row[3]);
      r.edge = row[4];
      r.from_lane = static_cast<int>(parse_int(row[5], "lane_changes.csv"));
      r.to_lane = static_cast<int>(parse_int(row[6], "lane_changes.csv"));
      r.reason = reason_from_string(row[7]);
      out.lane_changes.push_back(std::move(r));
    }
  }
  {
    CsvTable t = read_csv(dir / "edges.csv");
    for (const auto& row : t.rows) {
      EdgeMeasure m;
      m.interval_start = parse_double(row[0], "edges.csv");
      m.edge = row[1];
      m.mean_speed = parse_double(row[2], "edges.csv");
      m.mean_count = parse_double(row[3], "edges.csv");
      m.density = parse_double(row[4], "edges.csv");
      out.edge_measures.push_back(std::move(m));
    }
  }
  {
    CsvTable t = read_csv(dir / "trips.csv");
    for (const auto& row : t.rows) {
      TripRecord r;
      r.vehicle = static_cast<uint32_t>(parse_int(row[0], "trips.csv"));
      r.vehicle_class = vehicle_class_from_string(row[1]);
      r.style = style_from_string(row[2]);
      r.depart = parse_double(row[3], "trips.csv");
      r.arrive = parse_double(row[4], "trips.csv");
      r.completed = row[6] == "1";
      out.trips.push_back(std::move(r));
    }
  }
  {
    std::ifstream f(dir / "counters.json");
    if (!f) throw ParseError("cannot open '" + (dir / "counters.json").string() + "'");
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("bad counters.json in '" + dir.string() + "': " + ex.what());
    }
    out.counters.inserted = j.at("inserted").get<uint64_t>();
    out.counters.arrived = j.at("arrived").get<uint64_t>();
    out.counters.removed_stuck = j.at("removed_stuck").get<uint64_t>();
    out.counters.insertion_denied = j.at("insertion_denied").get<uint64_t>();
    out.counters.unroutable = j.value("unroutable", uint64_t{0});
    out.counters.active_at_end = j.value("active_at_end", uint64_t{0});
    out.measure_interval_s = j.value("measure_interval_s", 900.0);
    if (j.contains("scheduled_departures_per_interval"))
      out.scheduled_departures_per_interval =
          j.at("scheduled_departures_per_interval").get<std::vector<uint64_t>>();
    if (j.contains("demand_rate_per_interval"))
      out.demand_rate_per_interval = j.at("demand_rate_per_interval").get<std::vector<double>>();
  }
  return out;
}

}  // namespace lanesim
