#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include "lanesim/common.hpp"
#include "lanesim/metrics.hpp"
#include "lanesim/network.hpp"

namespace lanesim {

/// Per-edge travel times used for routing. Weights are clamped to never fall
/// below the free-flow time length / speed_limit.
struct EdgeWeights {
  std::vector<double> seconds;  // indexed by edge index
  double timestamp_s = 0.0;
};

inline EdgeWeights free_flow_weights(const RoadNetwork& net) {
  EdgeWeights w;
  w.seconds.reserve(net.edges().size());
  for (const auto& e : net.edges()) w.seconds.push_back(e.length_m / e.speed_limit_mps);
  return w;
}

/// Derives edge travel times from a trailing window of edge measures: length
/// divided by the vehicle-weighted mean speed over the window, floored at
/// 0.1 m/s so fully blocked edges stay finitely expensive. Edges without
/// observations fall back to free-flow time.
inline EdgeWeights weights_from_measures(const RoadNetwork& net,
                                         const std::vector<EdgeMeasure>& window,
                                         double timestamp_s = 0.0) {
  std::vector<double> speed_mass(net.edges().size(), 0.0);
  std::vector<double> count_mass(net.edges().size(), 0.0);
  for (const auto& m : window) {
    const int e = net.edge_index(m.edge);
    if (e < 0) throw ValidationError(m.edge, "measure references unknown edge '" + m.edge + "'");
    speed_mass[static_cast<size_t>(e)] += m.mean_speed * m.mean_count;
    count_mass[static_cast<size_t>(e)] += m.mean_count;
  }
  EdgeWeights w;
  w.timestamp_s = timestamp_s;
  w.seconds.resize(net.edges().size());
  for (size_t i = 0; i < net.edges().size(); ++i) {
    const Edge& e = net.edges()[i];
    const double free_flow = e.length_m / e.speed_limit_mps;
    if (count_mass[i] > 0.0) {
      const double v = std::max(speed_mass[i] / count_mass[i], 0.1);
      w.seconds[i] = std::max(e.length_m / v, free_flow);
    } else {
      w.seconds[i] = free_flow;
    }
  }
  return w;
}

/// A* over the edge graph (successors follow turn permissions). Returns the
/// minimum-total-weight edge sequence from origin to destination, both
/// inclusive. The heuristic is straight-line distance over the network's top
/// speed limit, which never overestimates; ties break on lexicographic edge
/// id so results are deterministic.
inline std::vector<int> astar_fastest_idx(const RoadNetwork& net, const EdgeWeights& weights,
                                          int origin, int destination) {
  const size_t n = net.edges().size();
  if (origin < 0 || destination < 0 || static_cast<size_t>(origin) >= n ||
      static_cast<size_t>(destination) >= n)
    throw InvalidParam("astar_fastest: edge index out of range");

  const double vmax = std::max(net.max_speed_limit(), 1e-9);
  const int goal_node = net.edge_from(destination);
  auto heuristic = [&](int e) {
    return e == destination ? 0.0 : net.node_distance(net.edge_to(e), goal_node) / vmax;
  };

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best(n, inf);
  std::vector<int> parent(n, -1);

  struct QueueEntry {
    double f;
    int edge;
  };
  auto later = [&](const QueueEntry& a, const QueueEntry& b) {
    if (a.f != b.f) return a.f > b.f;
    return net.edges()[static_cast<size_t>(a.edge)].id >
           net.edges()[static_cast<size_t>(b.edge)].id;
  };
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, decltype(later)> open(later);

  best[static_cast<size_t>(origin)] = weights.seconds[static_cast<size_t>(origin)];
  open.push({best[static_cast<size_t>(origin)] + heuristic(origin), origin});

  while (!open.empty()) {
    const auto [f, e] = open.top();
    open.pop();
    const double g = best[static_cast<size_t>(e)];
    if (f > g + heuristic(e) + 1e-12) continue;  // stale entry
    if (e == destination) {
      std::vector<int> path;
      for (int cur = e; cur != -1; cur = parent[static_cast<size_t>(cur)]) path.push_back(cur);
      std::reverse(path.begin(), path.end());
      return path;
    }
    for (int succ : net.successors(e)) {
      const double cand = g + weights.seconds[static_cast<size_t>(succ)];
      if (cand < best[static_cast<size_t>(succ)]) {
        best[static_cast<size_t>(succ)] = cand;
        parent[static_cast<size_t>(succ)] = e;
        open.push({cand + heuristic(succ), succ});
      }
    }
  }
  throw Unreachable(net.edges()[static_cast<size_t>(origin)].id,
                    net.edges()[static_cast<size_t>(destination)].id);
}

inline std::vector<std::string> astar_fastest(const RoadNetwork& net, const EdgeWeights& weights,
                                              const std::string& origin,
                                              const std::string& destination) {
  const int o = net.edge_index(origin);
  const int d = net.edge_index(destination);
  if (o < 0) throw InvalidParam("astar_fastest: unknown origin edge '" + origin + "'");
  if (d < 0) throw InvalidParam("astar_fastest: unknown destination edge '" + destination + "'");
  std::vector<std::string> ids;
  for (int e : astar_fastest_idx(net, weights, o, d))
    ids.push_back(net.edges()[static_cast<size_t>(e)].id);
  return ids;
}

/// Total weight of an edge path, origin and destination inclusive.
inline double path_cost(const EdgeWeights& weights, const std::vector<int>& path) {
  double c = 0.0;
  for (int e : path) c += weights.seconds[static_cast<size_t>(e)];
  return c;
}

}  // namespace lanesim
