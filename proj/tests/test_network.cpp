#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "lanesim/network.hpp"

using namespace lanesim;
namespace fs = std::filesystem;

namespace {

json two_node_doc(double length_m) {
  json doc;
  doc["nodes"] = json::array({
      {{"id", "a"}, {"x", 0.0}, {"y", 0.0}, {"control", "uncontrolled-priority"}},
      {{"id", "b"}, {"x", 500.0}, {"y", 0.0}, {"control", "uncontrolled-priority"}},
  });
  doc["edges"] = json::array({
      {{"id", "ab"},
       {"from", "a"},
       {"to", "b"},
       {"length_m", length_m},
       {"lanes", 1},
       {"speed_limit_mps", 13.89},
       {"turns", {{"0", json::array()}}}},
  });
  return doc;
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("lanesim_test_" + name);
}

}  // namespace

TEST_CASE("minimal two-node network loads and measures 0.5 km") {
  const RoadNetwork net = network_from_json(two_node_doc(500.0));
  REQUIRE(net.nodes().size() == 2);
  REQUIRE(net.edges().size() == 1);
  REQUIRE(net.total_length_km() == Catch::Approx(0.5));
}

TEST_CASE("dangling node reference names the offender") {
  json doc = two_node_doc(500.0);
  doc["edges"][0]["to"] = "n9";
  try {
    network_from_json(doc);
    FAIL("expected ValidationError");
  } catch (const ValidationError& ex) {
    REQUIRE(ex.element == "n9");
    REQUIRE(std::string(ex.what()).find("n9") != std::string::npos);
  }
}

TEST_CASE("zero-length edge is rejected") {
  REQUIRE_THROWS_AS(network_from_json(two_node_doc(0.0)), ValidationError);
}

TEST_CASE("disconnected network is rejected") {
  json doc = two_node_doc(500.0);
  doc["nodes"].push_back(
      {{"id", "island"}, {"x", 9.0}, {"y", 9.0}, {"control", "uncontrolled-priority"}});
  try {
    network_from_json(doc);
    FAIL("expected ValidationError");
  } catch (const ValidationError& ex) {
    REQUIRE(ex.element == "island");
  }
}

TEST_CASE("malformed JSON raises ParseError") {
  const auto path = temp_file("broken.json");
  std::ofstream(path) << "{ nodes: oops";
  REQUIRE_THROWS_AS(load_network(path), ParseError);
}

TEST_CASE("2x2 grid with no shares: counts") {
  const RoadNetwork net = generate_grid(2, 2, 200.0, 0.0, 0.0, 7);
  REQUIRE(net.nodes().size() == 4);
  REQUIRE(net.edges().size() == 8);
  for (const auto& e : net.edges()) {
    REQUIRE(e.lanes == 1);
    REQUIRE(e.speed_limit_mps == Catch::Approx(8.33));
  }
  for (const auto& n : net.nodes()) REQUIRE(n.control == NodeControl::uncontrolled_priority);
}

TEST_CASE("5x5 grid shares land within rounding") {
  const RoadNetwork net = generate_grid(5, 5, 200.0, 0.5, 0.5, 42);
  REQUIRE(net.nodes().size() == 25);
  REQUIRE(net.edges().size() == 80);
  int two_lane = 0;
  for (const auto& e : net.edges())
    if (e.lanes == 2) {
      ++two_lane;
      REQUIRE(e.speed_limit_mps == Catch::Approx(13.89));
    }
  REQUIRE(two_lane == 40);
  int signals = 0;
  for (const auto& n : net.nodes())
    if (n.control == NodeControl::signalized) ++signals;
  REQUIRE((signals == 12 || signals == 13));
}

TEST_CASE("generate_grid is a pure function of its arguments") {
  const std::string a = network_to_string(generate_grid(4, 6, 150.0, 0.3, 0.6, 99));
  const std::string b = network_to_string(generate_grid(4, 6, 150.0, 0.3, 0.6, 99));
  REQUIRE(a == b);
  const std::string c = network_to_string(generate_grid(4, 6, 150.0, 0.3, 0.6, 100));
  REQUIRE(a != c);
}

TEST_CASE("grid serialization round-trips byte-exactly") {
  const RoadNetwork net = generate_grid(5, 5, 200.0, 0.5, 0.5, 3);
  const auto path = temp_file("grid.json");
  save_network(net, path);
  const RoadNetwork reloaded = load_network(path);
  const auto path2 = temp_file("grid2.json");
  save_network(reloaded, path2);

  std::ifstream f1(path), f2(path2);
  const std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  REQUIRE(s1 == s2);
  REQUIRE(!s1.empty());
}

TEST_CASE("every generated grid passes load-validation") {
  // Validation happens both at generation and on reload; sampling a few
  // parameter corners exercises the turn/signal construction paths.
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    for (double share : {0.0, 0.5, 1.0}) {
      const RoadNetwork net = generate_grid(3, 4, 120.0, share, 1.0 - share, seed);
      const auto path = temp_file("prop.json");
      save_network(net, path);
      REQUIRE_NOTHROW(load_network(path));
    }
  }
}

TEST_CASE("invalid grid parameters raise InvalidParam") {
  REQUIRE_THROWS_AS(generate_grid(1, 5, 200.0, 0.5, 0.5, 1), InvalidParam);
  REQUIRE_THROWS_AS(generate_grid(5, 5, 200.0, 1.5, 0.5, 1), InvalidParam);
  REQUIRE_THROWS_AS(generate_grid(5, 5, -3.0, 0.5, 0.5, 1), InvalidParam);
}

TEST_CASE("signal plans serve every incoming edge and fill the cycle") {
  const RoadNetwork net = generate_grid(4, 4, 200.0, 0.4, 1.0, 11);
  for (const auto& n : net.nodes()) {
    REQUIRE(n.control == NodeControl::signalized);
    REQUIRE(n.signal.has_value());
    double total = 0.0;
    for (const auto& ph : n.signal->phases) total += ph.green_s + ph.yellow_s;
    REQUIRE(total == Catch::Approx(n.signal->cycle_s));
  }
}

TEST_CASE("two-lane edges split turns between lanes") {
  const RoadNetwork net = generate_grid(5, 5, 200.0, 1.0, 0.0, 5);
  bool saw_split = false;
  for (const auto& e : net.edges()) {
    REQUIRE(e.lanes == 2);
    REQUIRE_FALSE(e.turn_union().empty());
    if (e.turns[0] != e.turns[1]) saw_split = true;
  }
  REQUIRE(saw_split);
}
