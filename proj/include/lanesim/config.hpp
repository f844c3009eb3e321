#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "lanesim/common.hpp"
#include "lanesim/demand.hpp"
#include "lanesim/dynamics.hpp"
#include "lanesim/network.hpp"

namespace lanesim {

struct GridSpec {
  int rows = 5;
  int cols = 5;
  double block_len_m = 200.0;
  double two_lane_share = 0.5;
  double signalized_share = 0.5;
  uint64_t seed = 1;
};

/// Where the network comes from: a JSON file or a generated grid.
struct NetworkSource {
  std::optional<std::string> file;
  std::optional<GridSpec> grid;

  RoadNetwork build() const {
    if (file) return load_network(*file);
    if (grid)
      return generate_grid(grid->rows, grid->cols, grid->block_len_m, grid->two_lane_share,
                           grid->signalized_share, grid->seed);
    throw ConfigError("network section needs either 'file' or 'grid'");
  }
};

struct ODSource {
  std::optional<std::string> file;
  std::optional<double> uniform_boundary_total_veh_h;

  ODMatrix build(const RoadNetwork& net) const {
    if (file) return load_od_matrix(*file);
    if (uniform_boundary_total_veh_h)
      return uniform_boundary_od(net, *uniform_boundary_total_veh_h);
    throw ConfigError("demand section needs an 'od' with 'file' or 'uniform_boundary_total_veh_h'");
  }
};

struct EngineParams {
  double time_step_s = 0.5;
  double lc_duration_s = 2.0;
  double teleport_timeout_s = 300.0;
  double measure_interval_s = 900.0;
  double lc_cooldown_s = 5.0;
  double routing_window_s = 300.0;
  double routing_refresh_s = 60.0;
  double vehicle_length_m = 5.0;
  uint64_t seed = 1;
  bool check_invariants = false;
  DesireTuning desire;

  void validate() const {
    if (!(time_step_s > 0.0)) throw ConfigError("time_step_s must be > 0");
    auto multiple = [&](double v) {
      const double q = v / time_step_s;
      return std::abs(q - std::round(q)) < 1e-9;
    };
    if (!multiple(lc_duration_s)) throw ConfigError("lc_duration_s must be a multiple of time_step_s");
    if (!multiple(measure_interval_s))
      throw ConfigError("measure_interval_s must be a multiple of time_step_s");
    if (!(teleport_timeout_s > 0.0)) throw ConfigError("teleport_timeout_s must be > 0");
    if (!(vehicle_length_m > 0.0)) throw ConfigError("vehicle_length_m must be > 0");
  }
};

struct ScenarioConfig {
  NetworkSource network;
  ODSource od;
  DemandProfile profile;
  double horizon_s = 3600.0;
  FleetMix fleet;
  ProfileSet profiles = table1_profiles();
  std::string profile_set_name = "table1";
  EngineParams engine;

  void validate() const {
    engine.validate();
    fleet.validate();
    profile.validate();
    profiles.validate();
    if (!(horizon_s > 0.0)) throw ConfigError("horizon_s must be > 0");
    if (horizon_s > profile.coverage_s()) throw ConfigError("horizon_s exceeds profile coverage");
  }
};

// --- JSON --------------------------------------------------------------------

namespace cfg_detail {

inline double get_num(const json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}

inline void parse_profile_override(DriverProfile& p, const json& j) {
  if (j.contains("cf")) {
    const json& cf = j.at("cf");
    p.cf.max_accel = get_num(cf, "max_accel", p.cf.max_accel);
    p.cf.max_decel = get_num(cf, "max_decel", p.cf.max_decel);
    p.cf.min_gap = get_num(cf, "min_gap", p.cf.min_gap);
    p.cf.reaction_time = get_num(cf, "reaction_time", p.cf.reaction_time);
    p.cf.imperfection = get_num(cf, "imperfection", p.cf.imperfection);
  }
  if (j.contains("lc")) {
    const json& lc = j.at("lc");
    p.lc.strategic = get_num(lc, "strategic", p.lc.strategic);
    p.lc.speed_gain = get_num(lc, "speed_gain", p.lc.speed_gain);
    p.lc.keep_right = get_num(lc, "keep_right", p.lc.keep_right);
    p.lc.assertive = get_num(lc, "assertive", p.lc.assertive);
  }
}

inline std::string profile_key(VehicleClass c, DrivingStyle s) {
  return (c == VehicleClass::av ? std::string("av_") : std::string("cv_")) + to_string(s);
}

}  // namespace cfg_detail

inline ScenarioConfig scenario_config_from_json(const json& doc) {
  ScenarioConfig cfg;
  try {
    if (!doc.contains("network")) throw ConfigError("config missing 'network' section");
    const json& jn = doc.at("network");
    if (jn.contains("file")) {
      cfg.network.file = jn.at("file").get<std::string>();
    } else if (jn.contains("grid")) {
      const json& jg = jn.at("grid");
      GridSpec g;
      g.rows = jg.value("rows", g.rows);
      g.cols = jg.value("cols", g.cols);
      g.block_len_m = jg.value("block_len_m", g.block_len_m);
      g.two_lane_share = jg.value("two_lane_share", g.two_lane_share);
      g.signalized_share = jg.value("signalized_share", g.signalized_share);
      g.seed = jg.value("seed", g.seed);
      cfg.network.grid = g;
    } else {
      throw ConfigError("network section needs 'file' or 'grid'");
    }

    if (!doc.contains("demand")) throw ConfigError("config missing 'demand' section");
    const json& jd = doc.at("demand");
    if (jd.contains("od")) {
      const json& jo = jd.at("od");
      if (jo.contains("file")) cfg.od.file = jo.at("file").get<std::string>();
      if (jo.contains("uniform_boundary_total_veh_h"))
        cfg.od.uniform_boundary_total_veh_h = jo.at("uniform_boundary_total_veh_h").get<double>();
    }
    if (!cfg.od.file && !cfg.od.uniform_boundary_total_veh_h)
      throw ConfigError("demand.od needs 'file' or 'uniform_boundary_total_veh_h'");
    cfg.horizon_s = jd.value("horizon_s", cfg.horizon_s);
    if (jd.contains("profile")) {
      const json& jp = jd.at("profile");
      const std::string kind = jp.value("kind", std::string("real_shaped"));
      if (kind == "real_shaped") {
        cfg.profile.kind = ProfileKind::real_shaped;
        cfg.profile.factors = jp.contains("factors")
                                  ? jp.at("factors").get<std::vector<double>>()
                                  : default_real_shaped_factors();
      } else if (kind == "inflated") {
        cfg.profile.kind = ProfileKind::inflated;
        cfg.profile.start_factor = jp.value("start_factor", cfg.profile.start_factor);
        cfg.profile.peak_factor = jp.value("peak_factor", cfg.profile.peak_factor);
        cfg.profile.ramp_hours = jp.value("ramp_hours", cfg.profile.ramp_hours);
        cfg.profile.hold_hours = jp.value("hold_hours", cfg.profile.hold_hours);
      } else {
        throw ConfigError("unknown profile kind '" + kind + "'");
      }
    } else {
      cfg.profile.factors = default_real_shaped_factors();
    }

    if (doc.contains("fleet")) {
      const json& jf = doc.at("fleet");
      cfg.fleet.av_penetration = jf.value("av_penetration", cfg.fleet.av_penetration);
      if (jf.contains("style_shares")) {
        auto shares = jf.at("style_shares").get<std::vector<double>>();
        if (shares.size() != 3) throw ConfigError("style_shares needs exactly 3 entries");
        std::copy(shares.begin(), shares.end(), cfg.fleet.style_shares.begin());
      }
      if (jf.contains("profiles")) {
        const json& jp = jf.at("profiles");
        if (jp.is_string()) {
          const std::string name = jp.get<std::string>();
          if (name != "table1") throw ConfigError("unknown profile set '" + name + "'");
          cfg.profile_set_name = name;
        } else if (jp.is_object()) {
          cfg.profile_set_name = "custom";
          for (auto cls : {VehicleClass::cv, VehicleClass::av})
            for (int s = 0; s < 3; ++s) {
              const auto style = static_cast<DrivingStyle>(s);
              const std::string key = cfg_detail::profile_key(cls, style);
              if (jp.contains(key))
                cfg_detail::parse_profile_override(cfg.profiles.get(cls, style), jp.at(key));
            }
        }
      }
    }

    if (doc.contains("engine")) {
      const json& je = doc.at("engine");
      EngineParams& e = cfg.engine;
      e.time_step_s = je.value("time_step_s", e.time_step_s);
      e.lc_duration_s = je.value("lc_duration_s", e.lc_duration_s);
      e.teleport_timeout_s = je.value("teleport_timeout_s", e.teleport_timeout_s);
      e.measure_interval_s = je.value("measure_interval_s", e.measure_interval_s);
      e.lc_cooldown_s = je.value("lc_cooldown_s", e.lc_cooldown_s);
      e.routing_window_s = je.value("routing_window_s", e.routing_window_s);
      e.routing_refresh_s = je.value("routing_refresh_s", e.routing_refresh_s);
      e.vehicle_length_m = je.value("vehicle_length_m", e.vehicle_length_m);
      e.seed = je.value("seed", e.seed);
      e.check_invariants = je.value("check_invariants", e.check_invariants);
      e.desire.dv_gain = je.value("desire_dv_gain", e.desire.dv_gain);
      e.desire.dv_keep = je.value("desire_dv_keep", e.desire.dv_keep);
      e.desire.strategic_time_s = je.value("strategic_time_s", e.desire.strategic_time_s);
      e.desire.strategic_base_m = je.value("strategic_base_m", e.desire.strategic_base_m);
    }
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("malformed config: ") + ex.what());
  }
  cfg.validate();
  return cfg;
}

inline ScenarioConfig load_scenario_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& ex) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return scenario_config_from_json(doc);
}

/// Serializes a config with every default materialized, so each run directory
/// carries the exact parameters that produced it.
inline json scenario_config_to_json(const ScenarioConfig& cfg) {
  json doc;
  json& jn = doc["network"];
  if (cfg.network.file) {
    jn["file"] = *cfg.network.file;
  } else if (cfg.network.grid) {
    const GridSpec& g = *cfg.network.grid;
    jn["grid"] = {{"rows", g.rows},
                  {"cols", g.cols},
                  {"block_len_m", g.block_len_m},
                  {"two_lane_share", g.two_lane_share},
                  {"signalized_share", g.signalized_share},
                  {"seed", g.seed}};
  }

  json& jd = doc["demand"];
  if (cfg.od.file) jd["od"]["file"] = *cfg.od.file;
  if (cfg.od.uniform_boundary_total_veh_h)
    jd["od"]["uniform_boundary_total_veh_h"] = *cfg.od.uniform_boundary_total_veh_h;
  jd["horizon_s"] = cfg.horizon_s;
  if (cfg.profile.kind == ProfileKind::real_shaped) {
    jd["profile"]["kind"] = "real_shaped";
    jd["profile"]["factors"] = cfg.profile.factors;
  } else {
    jd["profile"]["kind"] = "inflated";
    jd["profile"]["start_factor"] = cfg.profile.start_factor;
    jd["profile"]["peak_factor"] = cfg.profile.peak_factor;
    jd["profile"]["ramp_hours"] = cfg.profile.ramp_hours;
    jd["profile"]["hold_hours"] = cfg.profile.hold_hours;
  }

  json& jf = doc["fleet"];
  jf["av_penetration"] = cfg.fleet.av_penetration;
  jf["style_shares"] = cfg.fleet.style_shares;
  jf["profile_set"] = cfg.profile_set_name;
  for (auto cls : {VehicleClass::cv, VehicleClass::av})
    for (int s = 0; s < 3; ++s) {
      const auto style = static_cast<DrivingStyle>(s);
      const DriverProfile& p = cfg.profiles.get(cls, style);
      json jp;
      jp["cf"] = {{"max_accel", p.cf.max_accel},
                  {"max_decel", p.cf.max_decel},
                  {"min_gap", p.cf.min_gap},
                  {"reaction_time", p.cf.reaction_time},
                  {"imperfection", p.cf.imperfection}};
      jp["lc"] = {{"strategic", p.lc.strategic},
                  {"speed_gain", p.lc.speed_gain},
                  {"keep_right", p.lc.keep_right},
                  {"assertive", p.lc.assertive}};
      jf["profiles"][cfg_detail::profile_key(cls, style)] = jp;
    }

  json& je = doc["engine"];
  const EngineParams& e = cfg.engine;
  je["time_step_s"] = e.time_step_s;
  je["lc_duration_s"] = e.lc_duration_s;
  je["teleport_timeout_s"] = e.teleport_timeout_s;
  je["measure_interval_s"] = e.measure_interval_s;
  je["lc_cooldown_s"] = e.lc_cooldown_s;
  je["routing_window_s"] = e.routing_window_s;
  je["routing_refresh_s"] = e.routing_refresh_s;
  je["vehicle_length_m"] = e.vehicle_length_m;
  je["seed"] = e.seed;
  je["check_invariants"] = e.check_invariants;
  je["desire_dv_gain"] = e.desire.dv_gain;
  je["desire_dv_keep"] = e.desire.dv_keep;
  je["strategic_time_s"] = e.desire.strategic_time_s;
  je["strategic_base_m"] = e.desire.strategic_base_m;
  return doc;
}

inline void save_resolved_config(const ScenarioConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << scenario_config_to_json(cfg).dump(2) << "\n";
}

}  // namespace lanesim
