#include <catch2/catch_amalgamated.hpp>

#include <limits>
#include <queue>
#include <vector>

#include "lanesim/network.hpp"
#include "lanesim/rng.hpp"
#include "lanesim/routing.hpp"

using namespace lanesim;

namespace {

// Independent oracle: plain Dijkstra over the same edge graph. Kept free of
// any A* machinery so it can arbitrate the heuristic.
double dijkstra_cost(const RoadNetwork& net, const EdgeWeights& w, int origin, int destination) {
  const size_t n = net.edges().size();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[static_cast<size_t>(origin)] = w.seconds[static_cast<size_t>(origin)];
  pq.push({dist[static_cast<size_t>(origin)], origin});
  while (!pq.empty()) {
    const auto [d, e] = pq.top();
    pq.pop();
    if (d > dist[static_cast<size_t>(e)]) continue;
    if (e == destination) return d;
    for (int succ : net.successors(e)) {
      const double cand = d + w.seconds[static_cast<size_t>(succ)];
      if (cand < dist[static_cast<size_t>(succ)]) {
        dist[static_cast<size_t>(succ)] = cand;
        pq.push({cand, succ});
      }
    }
  }
  return std::numeric_limits<double>::infinity();
}

EdgeWeights uniform_weights(const RoadNetwork& net, double w) {
  EdgeWeights ew;
  ew.seconds.assign(net.edges().size(), w);
  return ew;
}

}  // namespace

TEST_CASE("origin equal to destination yields the single-edge path") {
  const RoadNetwork net = generate_grid(3, 3, 100.0, 0.0, 0.0, 1);
  const std::string e = net.edges().front().id;
  const auto path = astar_fastest(net, free_flow_weights(net), e, e);
  REQUIRE(path == std::vector<std::string>{e});
}

TEST_CASE("3x3 grid corner to corner matches the hand count and the oracle") {
  const RoadNetwork net = generate_grid(3, 3, 100.0, 0.0, 0.0, 1);
  // Uniform weights make path cost proportional to edge count; the shortest
  // corner-to-corner chain is origin + two connecting blocks + destination.
  const EdgeWeights w = uniform_weights(net, 10.0);
  const int o = net.edge_index("e0_0__0_1");
  const int d = net.edge_index("e2_1__2_2");
  REQUIRE(o >= 0);
  REQUIRE(d >= 0);
  const auto path = astar_fastest_idx(net, w, o, d);
  REQUIRE(path.size() == 4);
  REQUIRE(path_cost(w, path) == Catch::Approx(40.0));
  REQUIRE(path_cost(w, path) == Catch::Approx(dijkstra_cost(net, w, o, d)));
}

TEST_CASE("A* equals Dijkstra on 200 seeded random instances") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int rows = 3 + static_cast<int>(rng.uniform_int(4));
    const int cols = 3 + static_cast<int>(rng.uniform_int(4));
    const RoadNetwork net =
        generate_grid(rows, cols, 80.0 + rng.uniform01() * 200.0, rng.uniform01(),
                      rng.uniform01(), 1000 + static_cast<uint64_t>(trial));
    EdgeWeights w = free_flow_weights(net);
    for (auto& s : w.seconds) s *= 1.0 + rng.uniform01() * 5.0;  // stays >= free flow
    const int o = static_cast<int>(rng.uniform_int(net.edges().size()));
    const int d = static_cast<int>(rng.uniform_int(net.edges().size()));
    const double oracle = dijkstra_cost(net, w, o, d);
    if (!std::isfinite(oracle)) {
      REQUIRE_THROWS_AS(astar_fastest_idx(net, w, o, d), Unreachable);
      continue;
    }
    const auto path = astar_fastest_idx(net, w, o, d);
    REQUIRE(path_cost(w, path) == Catch::Approx(oracle).epsilon(1e-12));
    // Path is turn-connected and starts/ends where requested.
    REQUIRE(path.front() == o);
    REQUIRE(path.back() == d);
    for (size_t i = 0; i + 1 < path.size(); ++i) {
      const auto& succ = net.successors(path[i]);
      REQUIRE(std::find(succ.begin(), succ.end(), path[i + 1]) != succ.end());
    }
  }
}

TEST_CASE("unreachable destination names both edges") {
  // One-way chain a -> b -> c; the downstream edge cannot reach the upstream
  // one through any turn.
  json doc;
  doc["nodes"] = json::array({
      {{"id", "a"}, {"x", 0.0}, {"y", 0.0}, {"control", "uncontrolled-priority"}},
      {{"id", "b"}, {"x", 100.0}, {"y", 0.0}, {"control", "uncontrolled-priority"}},
      {{"id", "c"}, {"x", 200.0}, {"y", 0.0}, {"control", "uncontrolled-priority"}},
  });
  doc["edges"] = json::array({
      {{"id", "ab"},
       {"from", "a"},
       {"to", "b"},
       {"length_m", 100.0},
       {"lanes", 1},
       {"speed_limit_mps", 10.0},
       {"turns", {{"0", json::array({"bc"})}}}},
      {{"id", "bc"},
       {"from", "b"},
       {"to", "c"},
       {"length_m", 100.0},
       {"lanes", 1},
       {"speed_limit_mps", 10.0},
       {"turns", {{"0", json::array()}}}},
  });
  const RoadNetwork net = network_from_json(doc);
  try {
    astar_fastest(net, free_flow_weights(net), "bc", "ab");
    FAIL("expected Unreachable");
  } catch (const Unreachable& ex) {
    REQUIRE(ex.origin == "bc");
    REQUIRE(ex.destination == "ab");
  }
}

TEST_CASE("weights_from_measures fallback and floor rules") {
  const RoadNetwork net = generate_grid(2, 2, 100.0, 1.0, 0.0, 9);  // limits 13.89

  SECTION("no measures at all: free-flow everywhere") {
    const EdgeWeights w = weights_from_measures(net, {});
    for (size_t i = 0; i < net.edges().size(); ++i)
      REQUIRE(w.seconds[i] == Catch::Approx(100.0 / 13.89));
  }

  SECTION("observed mean speed drives the weight") {
    EdgeMeasure m;
    m.edge = net.edges().front().id;
    m.mean_speed = 10.0;
    m.mean_count = 4.0;
    const EdgeWeights w = weights_from_measures(net, {m});
    REQUIRE(w.seconds[0] == Catch::Approx(10.0));
  }

  SECTION("zero speed floors at 0.1 m/s") {
    EdgeMeasure m;
    m.edge = net.edges().front().id;
    m.mean_speed = 0.0;
    m.mean_count = 4.0;
    const EdgeWeights w = weights_from_measures(net, {m});
    REQUIRE(w.seconds[0] == Catch::Approx(1000.0));
  }

  SECTION("weights never fall below free-flow time") {
    EdgeMeasure m;
    m.edge = net.edges().front().id;
    m.mean_speed = 99.0;  // faster than the limit
    m.mean_count = 4.0;
    const EdgeWeights w = weights_from_measures(net, {m});
    REQUIRE(w.seconds[0] == Catch::Approx(100.0 / 13.89));
  }
}
