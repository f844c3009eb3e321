#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "lanesim/common.hpp"
#include "lanesim/csv.hpp"
#include "lanesim/dynamics.hpp"
#include "lanesim/network.hpp"
#include "lanesim/rng.hpp"

namespace lanesim {

/// Hourly base flows between origin and destination edges, veh/h.
struct ODMatrix {
  std::map<std::pair<std::string, std::string>, double> entries;

  void validate() const {
    for (const auto& [pair, flow] : entries) {
      if (pair.first == pair.second)
        throw InvalidParam("OD pair with identical origin and destination '" + pair.first + "'");
      if (flow < 0.0) throw InvalidParam("negative OD flow for origin '" + pair.first + "'");
    }
  }
};

/// OD file: CSV with columns origin,destination,flow_veh_per_h.
inline ODMatrix load_od_matrix(const std::filesystem::path& path) {
  CsvTable table = read_csv(path);
  const int co = table.column("origin");
  const int cd = table.column("destination");
  const int cf = table.column("flow_veh_per_h");
  if (co < 0 || cd < 0 || cf < 0)
    throw ParseError("OD file '" + path.string() +
                     "' must have columns origin,destination,flow_veh_per_h");
  ODMatrix od;
  for (const auto& row : table.rows) {
    od.entries[{row[co], row[cd]}] =
        parse_double(row[cf], "OD file '" + path.string() + "'");
  }
  od.validate();
  return od;
}

/// Uniform boundary-to-boundary OD matrix: every ordered pair of an edge
/// leaving a boundary node and an edge arriving at one shares total_veh_per_h
/// evenly. Boundary nodes are those with fewer than four neighbor links, which
/// on a grid is exactly the border. Reverse-edge pairs are excluded.
inline ODMatrix uniform_boundary_od(const RoadNetwork& net, double total_veh_per_h) {
  if (total_veh_per_h < 0.0) throw InvalidParam("total_veh_per_h must be >= 0");
  std::vector<int> link_count(net.nodes().size(), 0);
  std::set<std::pair<int, int>> seen;
  for (size_t i = 0; i < net.edges().size(); ++i) {
    int a = net.edge_from(static_cast<int>(i));
    int b = net.edge_to(static_cast<int>(i));
    if (a > b) std::swap(a, b);
    if (seen.insert({a, b}).second) {
      ++link_count[a];
      ++link_count[b];
    }
  }
  std::vector<std::string> origins, destinations;
  for (size_t i = 0; i < net.edges().size(); ++i) {
    const Edge& e = net.edges()[i];
    if (link_count[net.edge_from(static_cast<int>(i))] < 4) origins.push_back(e.id);
    if (link_count[net.edge_to(static_cast<int>(i))] < 4) destinations.push_back(e.id);
  }
  std::sort(origins.begin(), origins.end());
  std::sort(destinations.begin(), destinations.end());

  auto is_reverse = [&](const std::string& a, const std::string& b) {
    const int ia = net.edge_index(a), ib = net.edge_index(b);
    return net.edge_from(ia) == net.edge_to(ib) && net.edge_to(ia) == net.edge_from(ib);
  };

  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& o : origins)
    for (const auto& d : destinations)
      if (o != d && !is_reverse(o, d)) pairs.push_back({o, d});
  ODMatrix od;
  if (pairs.empty()) return od;
  const double per_pair = total_veh_per_h / static_cast<double>(pairs.size());
  for (const auto& p : pairs) od.entries[p] = per_pair;
  return od;
}

enum class ProfileKind { real_shaped, inflated };

/// 24-hour demand profile. The real-shaped kind carries 24 hourly multipliers;
/// the inflated kind ramps linearly from start_factor to peak_factor over
/// ramp_hours, holds the peak for hold_hours, then drops to zero so the
/// network unloads.
struct DemandProfile {
  ProfileKind kind = ProfileKind::real_shaped;
  std::vector<double> factors;  // real-shaped: exactly 24 entries
  double start_factor = 0.5;
  double peak_factor = 1.5;
  double ramp_hours = 2.4;
  double hold_hours = 0.6;

  void validate() const {
    if (kind == ProfileKind::real_shaped) {
      if (factors.size() != 24) throw InvalidParam("real-shaped profile needs 24 hourly factors");
      for (double f : factors)
        if (f < 0.0) throw InvalidParam("profile factors must be >= 0");
    } else {
      if (start_factor < 0.0 || peak_factor < start_factor)
        throw InvalidParam("inflated profile must be nondecreasing up to its peak");
      if (!(ramp_hours > 0.0) || hold_hours < 0.0)
        throw InvalidParam("inflated profile needs ramp_hours > 0 and hold_hours >= 0");
    }
  }

  /// Demand multiplier for hour h (fractional hours sample the same factor).
  double factor(double hour) const {
    if (kind == ProfileKind::real_shaped) {
      const int h = static_cast<int>(hour);
      if (h < 0 || h >= 24) return 0.0;
      return factors[static_cast<size_t>(h)];
    }
    if (hour < 0.0) return 0.0;
    if (hour < ramp_hours) return start_factor + (peak_factor - start_factor) * hour / ramp_hours;
    if (hour < ramp_hours + hold_hours) return peak_factor;
    return 0.0;
  }

  /// Seconds of demand coverage; horizons beyond this are invalid.
  double coverage_s() const {
    return kind == ProfileKind::real_shaped ? 24.0 * 3600.0
                                            : std::numeric_limits<double>::infinity();
  }
};

/// Typical working-day shape with a morning peak at 8-9 and a broader
/// afternoon peak at 16-18.
inline std::vector<double> default_real_shaped_factors() {
  return {0.20, 0.15, 0.10, 0.10, 0.15, 0.30, 0.60, 0.90, 1.00, 0.80, 0.70, 0.70,
          0.75, 0.70, 0.70, 0.80, 0.95, 1.00, 0.85, 0.60, 0.50, 0.40, 0.30, 0.25};
}

/// Fleet composition: AV penetration on the 10% grid plus per-style shares
/// (defaults to exact thirds).
struct FleetMix {
  double av_penetration = 0.0;
  std::array<double, 3> style_shares = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  void validate() const {
    if (av_penetration < -1e-9 || av_penetration > 1.0 + 1e-9)
      throw InvalidParam("av_penetration must be in [0,1]");
    if (std::abs(av_penetration * 10.0 - std::round(av_penetration * 10.0)) > 1e-9)
      throw InvalidParam("av_penetration must be a multiple of 0.1");
    double sum = 0.0;
    for (double s : style_shares) {
      if (s < 0.0) throw InvalidParam("style shares must be >= 0");
      sum += s;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidParam("style shares must sum to 1");
  }
};

/// One scheduled trip. The driver profile is unassigned until assign_fleet.
struct Departure {
  double time_s = 0.0;
  std::string origin;
  std::string destination;
  const DriverProfile* profile = nullptr;
};

/// Expands an OD matrix against a demand profile into a departure schedule.
/// Per OD pair and hour, the departure count is Poisson with mean
/// flow * factor(hour) (scaled for a partial final hour) and instants are
/// uniform within the hour. Deterministic in the seed; output sorted by time.
inline std::vector<Departure> expand_demand(const ODMatrix& od, const DemandProfile& profile,
                                            double horizon_s, uint64_t seed) {
  od.validate();
  profile.validate();
  if (horizon_s < 0.0) throw InvalidParam("horizon must be >= 0");
  if (horizon_s > profile.coverage_s())
    throw InvalidParam("horizon exceeds profile coverage");

  Rng rng(sub_seed(seed, 0xdeaul));
  std::vector<Departure> out;
  const int hours = static_cast<int>(std::ceil(horizon_s / 3600.0));
  for (const auto& [pair, flow] : od.entries) {  // std::map: deterministic order
    if (flow <= 0.0) continue;
    for (int h = 0; h < hours; ++h) {
      const double hour_start = h * 3600.0;
      const double hour_end = std::min(horizon_s, hour_start + 3600.0);
      const double covered = hour_end - hour_start;
      if (covered <= 0.0) continue;
      const double mean = flow * profile.factor(h) * covered / 3600.0;
      const uint64_t count = rng.poisson(mean);
      for (uint64_t k = 0; k < count; ++k) {
        Departure d;
        d.time_s = hour_start + rng.uniform01() * covered;
        d.origin = pair.first;
        d.destination = pair.second;
        out.push_back(std::move(d));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Departure& a, const Departure& b) { return a.time_s < b.time_s; });
  return out;
}

/// Assigns vehicle class and driving style. Class by seeded shuffle with the
/// AV count rounded to the nearest integer (realized penetration within one
/// vehicle of target); styles cycle conservative -> moderate -> aggressive
/// within each class against largest-remainder quotas, so realized shares
/// deviate from targets by less than one vehicle per class.
inline void assign_fleet(std::vector<Departure>& departures, const FleetMix& mix,
                         const ProfileSet& profiles, uint64_t seed) {
  mix.validate();
  const size_t n = departures.size();
  if (n == 0) return;

  const size_t n_av =
      static_cast<size_t>(std::lround(mix.av_penetration * static_cast<double>(n)));
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(sub_seed(seed, 0xf1ee7ul));
  rng.shuffle(order);
  std::vector<char> is_av(n, 0);
  for (size_t i = 0; i < n_av; ++i) is_av[order[i]] = 1;

  auto assign_styles = [&](VehicleClass cls, char flag) {
    size_t class_n = 0;
    for (char f : is_av)
      if (f == flag) ++class_n;
    if (class_n == 0) return;
    // Largest-remainder quotas per style; ties favor the cycle order.
    std::array<size_t, 3> quota{};
    std::array<double, 3> frac{};
    size_t used = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = mix.style_shares[static_cast<size_t>(s)] * static_cast<double>(class_n);
      quota[static_cast<size_t>(s)] = static_cast<size_t>(std::floor(exact));
      frac[static_cast<size_t>(s)] = exact - std::floor(exact);
      used += quota[static_cast<size_t>(s)];
    }
    while (used < class_n) {
      int best = 0;
      for (int s = 1; s < 3; ++s)
        if (frac[static_cast<size_t>(s)] > frac[static_cast<size_t>(best)] + 1e-12) best = s;
      ++quota[static_cast<size_t>(best)];
      frac[static_cast<size_t>(best)] = -1.0;
      ++used;
    }
    std::array<size_t, 3> assigned{};
    int cursor = 0;
    for (size_t i = 0; i < n; ++i) {
      if (is_av[i] != flag) continue;
      int tries = 0;
      while (assigned[static_cast<size_t>(cursor)] >= quota[static_cast<size_t>(cursor)] &&
             tries < 3) {
        cursor = (cursor + 1) % 3;
        ++tries;
      }
      const auto style = static_cast<DrivingStyle>(cursor);
      ++assigned[static_cast<size_t>(cursor)];
      cursor = (cursor + 1) % 3;
      departures[i].profile = &profiles.get(cls, style);
    }
  };
  assign_styles(VehicleClass::cv, 0);
  assign_styles(VehicleClass::av, 1);
}

}  // namespace lanesim
