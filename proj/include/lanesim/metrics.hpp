#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lanesim/common.hpp"
#include "lanesim/network.hpp"
#include "lanesim/outputs.hpp"

namespace lanesim {

/// Vehicle-weighted mean space speed over one interval:
/// sum(v_i * N_i) / sum(N_i). Throws EmptyNetworkInterval when no edge carries
/// vehicles.
inline double mean_space_speed(const std::vector<EdgeMeasure>& measures) {
  double num = 0.0, den = 0.0;
  for (const auto& m : measures) {
    num += m.mean_speed * m.mean_count;
    den += m.mean_count;
  }
  if (den <= 0.0) throw EmptyNetworkInterval("no circulating vehicles in interval");
  return num / den;
}

/// Network density sum(N_i) / sum(l_i) in veh/km. Edges without a measure
/// contribute their length to the denominator with zero count.
inline double network_density(const std::vector<EdgeMeasure>& measures, const RoadNetwork& net) {
  double count = 0.0;
  for (const auto& m : measures) {
    if (net.edge_index(m.edge) < 0)
      throw ValidationError(m.edge, "measure references unknown edge '" + m.edge + "'");
    count += m.mean_count;
  }
  const double total_len = net.total_length_m();
  if (total_len <= 0.0) return 0.0;
  return count / total_len * 1000.0;
}

enum class FlowMode {
  literal,          // Q = sum(v_i * k_i), veh/s as printed
  length_weighted,  // 3600 * sum(v_i * k_i / lanes_i * l_i) / sum(l_i), veh/h/lane
};

/// Network flow. The literal mode implements the plain sum over edges and is
/// the authoritative quantity for invariant tests; the length-weighted
/// companion normalizes by length and lane count to give a capacity figure in
/// veh/h/lane.
inline double network_flow(const std::vector<EdgeMeasure>& measures, const RoadNetwork& net,
                           FlowMode mode) {
  if (mode == FlowMode::literal) {
    double q = 0.0;
    for (const auto& m : measures) q += m.mean_speed * m.density;
    return q;
  }
  double weighted = 0.0;
  for (const auto& m : measures) {
    const int e = net.edge_index(m.edge);
    if (e < 0) throw ValidationError(m.edge, "measure references unknown edge '" + m.edge + "'");
    const Edge& edge = net.edges()[static_cast<size_t>(e)];
    weighted += m.mean_speed * m.density / edge.lanes * edge.length_m;
  }
  const double total_len = net.total_length_m();
  if (total_len <= 0.0) return 0.0;
  return 3600.0 * weighted / total_len;
}

enum class MfdPhase { loading, unloading };

inline std::string to_string(MfdPhase p) {
  return p == MfdPhase::loading ? "loading" : "unloading";
}

inline MfdPhase mfd_phase_from_string(const std::string& s) {
  if (s == "loading") return MfdPhase::loading;
  if (s == "unloading") return MfdPhase::unloading;
  throw ParseError("unknown MFD phase '" + s + "'");
}

struct MfdPoint {
  double interval_start = 0.0;    // s
  double density = 0.0;           // K, veh/km
  double flow_literal = 0.0;      // Q, veh/s
  double flow_length_weighted = 0.0;  // veh/h/lane
  MfdPhase phase = MfdPhase::loading;
};

/// Builds the flow-density series, one point per measurement interval. A point
/// is tagged `loading` while the interval's inserted-demand rate is
/// nondecreasing versus the previous interval, `unloading` afterwards; this
/// splits the hysteresis loop into its two branches. The configured demand
/// rate is used when available (it is noise-free); the realized departure
/// counts serve as the fallback.
inline std::vector<MfdPoint> build_mfd(const RunOutput& run, const RoadNetwork& net) {
  std::map<double, std::vector<EdgeMeasure>> by_interval;
  for (const auto& m : run.edge_measures) by_interval[m.interval_start].push_back(m);

  auto demand_at = [&](size_t idx) {
    if (!run.demand_rate_per_interval.empty())
      return idx < run.demand_rate_per_interval.size() ? run.demand_rate_per_interval[idx] : 0.0;
    return idx < run.scheduled_departures_per_interval.size()
               ? static_cast<double>(run.scheduled_departures_per_interval[idx])
               : 0.0;
  };

  std::vector<MfdPoint> points;
  size_t idx = 0;
  double prev_demand = 0.0;
  MfdPhase phase = MfdPhase::loading;
  for (const auto& [start, measures] : by_interval) {
    MfdPoint p;
    p.interval_start = start;
    p.density = network_density(measures, net);
    p.flow_literal = network_flow(measures, net, FlowMode::literal);
    p.flow_length_weighted = network_flow(measures, net, FlowMode::length_weighted);
    const double demand = demand_at(idx);
    // A strict drop flips to unloading; the phase holds through flat stretches
    // and flips back once demand genuinely rises again.
    if (demand < prev_demand - 1e-9)
      phase = MfdPhase::unloading;
    else if (demand > prev_demand + 1e-9)
      phase = MfdPhase::loading;
    p.phase = phase;
    prev_demand = demand;
    ++idx;
    points.push_back(p);
  }
  return points;
}

struct CriticalPoint {
  double q_max = 0.0;
  double k_0 = 0.0;  // veh/km
};

/// Maximum flow and the density at which it occurs. Flow ties break toward the
/// lowest density.
inline CriticalPoint critical_point(const std::vector<MfdPoint>& points, FlowMode mode) {
  if (points.empty()) throw EmptyMfd("cannot take the critical point of an empty MFD");
  CriticalPoint best;
  bool first = true;
  for (const auto& p : points) {
    const double q = mode == FlowMode::literal ? p.flow_literal : p.flow_length_weighted;
    if (first || q > best.q_max || (q == best.q_max && p.density < best.k_0)) {
      best.q_max = q;
      best.k_0 = p.density;
      first = false;
    }
  }
  return best;
}

// --- Trip summaries ----------------------------------------------------------

struct TravelTimeSummary {
  double mean_all = 0.0;
  double mean_cv = 0.0;
  double mean_av = 0.0;
  uint64_t completed_all = 0;
  uint64_t completed_cv = 0;
  uint64_t completed_av = 0;
  uint64_t incomplete = 0;
};

/// Mean travel time of completed trips, overall and per class. Incomplete
/// trips are only counted.
inline TravelTimeSummary travel_time_summary(const std::vector<TripRecord>& trips) {
  TravelTimeSummary s;
  double sum_all = 0.0, sum_cv = 0.0, sum_av = 0.0;
  for (const auto& t : trips) {
    if (!t.completed) {
      ++s.incomplete;
      continue;
    }
    sum_all += t.travel_time();
    ++s.completed_all;
    if (t.vehicle_class == VehicleClass::av) {
      sum_av += t.travel_time();
      ++s.completed_av;
    } else {
      sum_cv += t.travel_time();
      ++s.completed_cv;
    }
  }
  if (s.completed_all) s.mean_all = sum_all / static_cast<double>(s.completed_all);
  if (s.completed_cv) s.mean_cv = sum_cv / static_cast<double>(s.completed_cv);
  if (s.completed_av) s.mean_av = sum_av / static_cast<double>(s.completed_av);
  return s;
}

// --- Statistics helpers ------------------------------------------------------

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n-1)
  size_t n = 0;
};

inline MeanSd mean_sd(const std::vector<double>& xs) {
  MeanSd r;
  r.n = xs.size();
  if (r.n == 0) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(r.n);
  if (r.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  }
  return r;
}

inline std::vector<double> ranks_with_ties(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

/// Spearman rank correlation with average ranks for ties. Used as the
/// monotone-trend statistic across penetration levels.
inline double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidParam("spearman_rho needs two equally sized series of length >= 2");
  const auto rx = ranks_with_ties(x);
  const auto ry = ranks_with_ties(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / static_cast<double>(rx.size());
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / static_cast<double>(ry.size());
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    cov += (rx[i] - mx) * (ry[i] - my);
    vx += (rx[i] - mx) * (rx[i] - mx);
    vy += (ry[i] - my) * (ry[i] - my);
  }
  if (vx <= 0.0 || vy <= 0.0) return 0.0;
  return cov / std::sqrt(vx * vy);
}

}  // namespace lanesim
