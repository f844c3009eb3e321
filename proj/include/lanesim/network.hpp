#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lanesim/common.hpp"
#include "lanesim/rng.hpp"

namespace lanesim {

using json = nlohmann::json;

enum class NodeControl { uncontrolled_priority, signalized };

inline std::string to_string(NodeControl c) {
  return c == NodeControl::signalized ? "signalized" : "uncontrolled-priority";
}

inline NodeControl node_control_from_string(const std::string& s) {
  if (s == "signalized") return NodeControl::signalized;
  if (s == "uncontrolled-priority") return NodeControl::uncontrolled_priority;
  throw ParseError("unknown node control '" + s + "'");
}

/// One fixed-time signal phase: the set of incoming edges served, plus
/// green and yellow durations in seconds.
struct SignalPhase {
  std::vector<std::string> served;  // incoming edge ids, kept sorted
  double green_s = 0.0;
  double yellow_s = 0.0;
};

struct SignalPlan {
  double cycle_s = 60.0;
  std::vector<SignalPhase> phases;
};

struct Node {
  std::string id;
  double x = 0.0;  // meters
  double y = 0.0;
  NodeControl control = NodeControl::uncontrolled_priority;
  std::optional<SignalPlan> signal;
};

/// Directed road edge. Lane 0 is the rightmost lane. `turns[l]` lists the
/// outgoing edge ids reachable from lane l at the downstream node; a lane with
/// an empty set is a dead-end lane for every movement.
struct Edge {
  std::string id;
  std::string from;
  std::string to;
  double length_m = 0.0;
  int lanes = 1;
  double speed_limit_mps = 13.89;
  std::vector<std::vector<std::string>> turns;  // per lane, sorted edge ids

  /// Union of per-lane turn targets, sorted, deduplicated.
  std::vector<std::string> turn_union() const {
    std::vector<std::string> all;
    for (const auto& lane : turns) all.insert(all.end(), lane.begin(), lane.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
  }
};

/// Immutable road graph. After construction/loading the network is never
/// mutated, so it can be shared read-only across concurrently executing runs.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Node> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    build_indices();
    validate();
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }

  int node_index(const std::string& id) const {
    auto it = node_index_.find(id);
    return it == node_index_.end() ? -1 : it->second;
  }
  int edge_index(const std::string& id) const {
    auto it = edge_index_.find(id);
    return it == edge_index_.end() ? -1 : it->second;
  }

  int edge_from(int e) const { return edge_from_[e]; }
  int edge_to(int e) const { return edge_to_[e]; }

  /// Edge indices reachable from edge e through any lane's turn permissions.
  const std::vector<int>& successors(int e) const { return successors_[e]; }

  /// Per-lane turn permissions of edge e as edge indices.
  const std::vector<std::vector<int>>& lane_turns(int e) const { return lane_turns_[e]; }

  /// Edge indices arriving at node n.
  const std::vector<int>& incoming(int n) const { return incoming_[n]; }
  /// Edge indices departing node n.
  const std::vector<int>& outgoing(int n) const { return outgoing_[n]; }

  double total_length_m() const {
    double sum = 0.0;
    for (const auto& e : edges_) sum += e.length_m;
    return sum;
  }
  double total_length_km() const { return total_length_m() / 1000.0; }
  double total_lane_km() const {
    double sum = 0.0;
    for (const auto& e : edges_) sum += e.length_m * e.lanes;
    return sum / 1000.0;
  }
  double max_speed_limit() const {
    double v = 0.0;
    for (const auto& e : edges_) v = std::max(v, e.speed_limit_mps);
    return v;
  }

  double node_distance(int a, int b) const {
    const double dx = nodes_[a].x - nodes_[b].x;
    const double dy = nodes_[a].y - nodes_[b].y;
    return std::sqrt(dx * dx + dy * dy);
  }

 private:
  void build_indices() {
    node_index_.clear();
    edge_index_.clear();
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (!node_index_.emplace(nodes_[i].id, static_cast<int>(i)).second)
        throw ValidationError(nodes_[i].id, "duplicate node id '" + nodes_[i].id + "'");
    }
    for (size_t i = 0; i < edges_.size(); ++i) {
      if (!edge_index_.emplace(edges_[i].id, static_cast<int>(i)).second)
        throw ValidationError(edges_[i].id, "duplicate edge id '" + edges_[i].id + "'");
    }
    edge_from_.resize(edges_.size());
    edge_to_.resize(edges_.size());
    incoming_.assign(nodes_.size(), {});
    outgoing_.assign(nodes_.size(), {});
    for (size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      auto fi = node_index_.find(e.from);
      auto ti = node_index_.find(e.to);
      if (fi == node_index_.end())
        throw ValidationError(e.from, "edge '" + e.id + "' references missing node '" + e.from + "'");
      if (ti == node_index_.end())
        throw ValidationError(e.to, "edge '" + e.id + "' references missing node '" + e.to + "'");
      edge_from_[i] = fi->second;
      edge_to_[i] = ti->second;
      outgoing_[fi->second].push_back(static_cast<int>(i));
      incoming_[ti->second].push_back(static_cast<int>(i));
    }
    lane_turns_.assign(edges_.size(), {});
    successors_.assign(edges_.size(), {});
    for (size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      lane_turns_[i].resize(e.turns.size());
      std::set<int> uni;
      for (size_t l = 0; l < e.turns.size(); ++l) {
        for (const auto& tid : e.turns[l]) {
          auto it = edge_index_.find(tid);
          if (it == edge_index_.end())
            throw ValidationError(tid, "edge '" + e.id + "' turn references missing edge '" + tid + "'");
          lane_turns_[i][l].push_back(it->second);
          uni.insert(it->second);
        }
      }
      successors_[i].assign(uni.begin(), uni.end());
    }
  }

  void validate() const {
    for (const auto& e : edges_) {
      if (!(e.length_m > 0.0))
        throw ValidationError(e.id, "edge '" + e.id + "' has non-positive length");
      if (e.lanes < 1)
        throw ValidationError(e.id, "edge '" + e.id + "' has lane count < 1");
      if (!(e.speed_limit_mps > 0.0))
        throw ValidationError(e.id, "edge '" + e.id + "' has non-positive speed limit");
      if (static_cast<int>(e.turns.size()) != e.lanes)
        throw ValidationError(e.id, "edge '" + e.id + "' turn table does not cover every lane");
    }
    // Turn targets must actually depart the downstream node; the union must be
    // nonempty whenever the downstream node has outgoing edges at all.
    for (size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      for (const auto& lane : lane_turns_[i]) {
        for (int t : lane) {
          if (edge_from_[t] != edge_to_[i])
            throw ValidationError(edges_[t].id, "edge '" + e.id + "' permits turn onto '" +
                                                    edges_[t].id + "' which does not start at node '" +
                                                    nodes_[edge_to_[i]].id + "'");
        }
      }
      if (successors_[i].empty() && !outgoing_[edge_to_[i]].empty())
        throw ValidationError(e.id, "edge '" + e.id + "' has no permitted continuation");
    }
    for (const auto& n : nodes_) {
      if (n.control == NodeControl::signalized) {
        if (!n.signal)
          throw ValidationError(n.id, "signalized node '" + n.id + "' has no signal plan");
        validate_signal(n);
      } else if (n.signal) {
        throw ValidationError(n.id, "node '" + n.id + "' has a signal plan but is not signalized");
      }
    }
    check_connected();
  }

  void validate_signal(const Node& n) const {
    const SignalPlan& plan = *n.signal;
    double total = 0.0;
    std::set<std::string> served;
    for (const auto& ph : plan.phases) {
      total += ph.green_s + ph.yellow_s;
      for (const auto& eid : ph.served) {
        auto it = edge_index_.find(eid);
        if (it == edge_index_.end() || edges_[it->second].to != n.id)
          throw ValidationError(eid, "signal at '" + n.id + "' serves '" + eid +
                                         "' which is not an incoming edge");
        served.insert(eid);
      }
    }
    if (std::abs(total - plan.cycle_s) > 1e-9)
      throw ValidationError(n.id, "signal at '" + n.id + "' phase durations do not sum to the cycle");
    for (int e : incoming_[node_index_.at(n.id)]) {
      if (!served.count(edges_[e].id))
        throw ValidationError(edges_[e].id, "signal at '" + n.id + "' never serves incoming edge '" +
                                                edges_[e].id + "'");
    }
  }

  void check_connected() const {
    if (nodes_.empty()) throw ValidationError("", "network has no nodes");
    // Weak connectivity over the node graph.
    std::vector<char> seen(nodes_.size(), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    size_t visited = 1;
    while (!stack.empty()) {
      int n = stack.back();
      stack.pop_back();
      auto visit = [&](int other) {
        if (!seen[other]) {
          seen[other] = 1;
          ++visited;
          stack.push_back(other);
        }
      };
      for (int e : outgoing_[n]) visit(edge_to_[e]);
      for (int e : incoming_[n]) visit(edge_from_[e]);
    }
    if (visited != nodes_.size()) {
      for (size_t i = 0; i < nodes_.size(); ++i)
        if (!seen[i])
          throw ValidationError(nodes_[i].id, "network is disconnected; node '" + nodes_[i].id +
                                                  "' is unreachable");
    }
  }

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::map<std::string, int> node_index_;
  std::map<std::string, int> edge_index_;
  std::vector<int> edge_from_, edge_to_;
  std::vector<std::vector<int>> incoming_, outgoing_;
  std::vector<std::vector<std::vector<int>>> lane_turns_;
  std::vector<std::vector<int>> successors_;
};

// --- JSON serialization ------------------------------------------------------
//
// Schema: {"nodes":[{id,x,y,control,signal?}],
//          "edges":[{id,from,to,length_m,lanes,speed_limit_mps,turns:{"0":[...]}}]}
// Arrays are sorted by id and nlohmann::json orders object keys alphabetically,
// so serialization is canonical and round-trips byte-exactly.

inline json network_to_json(const RoadNetwork& net) {
  json out;
  out["nodes"] = json::array();
  out["edges"] = json::array();

  std::vector<const Node*> nodes;
  for (const auto& n : net.nodes()) nodes.push_back(&n);
  std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const Node* n : nodes) {
    json jn;
    jn["id"] = n->id;
    jn["x"] = n->x;
    jn["y"] = n->y;
    jn["control"] = to_string(n->control);
    if (n->signal) {
      json plan;
      plan["cycle_s"] = n->signal->cycle_s;
      plan["phases"] = json::array();
      for (const auto& ph : n->signal->phases) {
        json jp;
        auto served = ph.served;
        std::sort(served.begin(), served.end());
        jp["served"] = served;
        jp["green_s"] = ph.green_s;
        jp["yellow_s"] = ph.yellow_s;
        plan["phases"].push_back(jp);
      }
      jn["signal"] = plan;
    }
    out["nodes"].push_back(jn);
  }

  std::vector<const Edge*> edges;
  for (const auto& e : net.edges()) edges.push_back(&e);
  std::sort(edges.begin(), edges.end(), [](auto* a, auto* b) { return a->id < b->id; });
  for (const Edge* e : edges) {
    json je;
    je["id"] = e->id;
    je["from"] = e->from;
    je["to"] = e->to;
    je["length_m"] = e->length_m;
    je["lanes"] = e->lanes;
    je["speed_limit_mps"] = e->speed_limit_mps;
    json turns = json::object();
    for (size_t l = 0; l < e->turns.size(); ++l) {
      auto ids = e->turns[l];
      std::sort(ids.begin(), ids.end());
      turns[std::to_string(l)] = ids;
    }
    je["turns"] = turns;
    out["edges"].push_back(je);
  }
  return out;
}

/// Default two-phase plan for a signalized node whose file entry carries no
/// explicit plan: 60 s cycle, 3 s yellow per phase, green split evenly,
/// incoming edges grouped by dominant approach axis.
inline SignalPlan default_signal_plan(const std::vector<const Edge*>& incoming,
                                      const std::map<std::string, std::pair<double, double>>& node_pos,
                                      double cycle_s = 60.0, double yellow_s = 3.0) {
  std::vector<std::string> horizontal, vertical;
  for (const Edge* e : incoming) {
    const auto& a = node_pos.at(e->from);
    const auto& b = node_pos.at(e->to);
    const double dx = std::abs(b.first - a.first);
    const double dy = std::abs(b.second - a.second);
    (dx >= dy ? horizontal : vertical).push_back(e->id);
  }
  std::sort(horizontal.begin(), horizontal.end());
  std::sort(vertical.begin(), vertical.end());

  SignalPlan plan;
  plan.cycle_s = cycle_s;
  if (horizontal.empty() || vertical.empty()) {
    SignalPhase ph;
    ph.served = horizontal.empty() ? vertical : horizontal;
    ph.green_s = cycle_s - yellow_s;
    ph.yellow_s = yellow_s;
    plan.phases.push_back(ph);
    return plan;
  }
  const double green = (cycle_s - 2.0 * yellow_s) / 2.0;
  plan.phases.push_back({horizontal, green, yellow_s});
  plan.phases.push_back({vertical, green, yellow_s});
  return plan;
}

inline long parse_lane_key(const std::string& key, const std::string& edge_id) {
  try {
    size_t pos = 0;
    long v = std::stol(key, &pos);
    if (pos != key.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ParseError("edge '" + edge_id + "' has non-numeric turn lane key '" + key + "'");
  }
}

inline RoadNetwork network_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges"))
    throw ParseError("network document must contain 'nodes' and 'edges' arrays");

  std::vector<Node> nodes;
  std::map<std::string, std::pair<double, double>> node_pos;
  try {
    for (const auto& jn : doc.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<std::string>();
      n.x = jn.at("x").get<double>();
      n.y = jn.at("y").get<double>();
      n.control = node_control_from_string(jn.at("control").get<std::string>());
      if (jn.contains("signal")) {
        SignalPlan plan;
        plan.cycle_s = jn.at("signal").at("cycle_s").get<double>();
        for (const auto& jp : jn.at("signal").at("phases")) {
          SignalPhase ph;
          ph.served = jp.at("served").get<std::vector<std::string>>();
          std::sort(ph.served.begin(), ph.served.end());
          ph.green_s = jp.at("green_s").get<double>();
          ph.yellow_s = jp.at("yellow_s").get<double>();
          plan.phases.push_back(std::move(ph));
        }
        n.signal = std::move(plan);
      }
      node_pos[n.id] = {n.x, n.y};
      nodes.push_back(std::move(n));
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed node entry: ") + ex.what());
  }

  std::vector<Edge> edges;
  try {
    for (const auto& je : doc.at("edges")) {
      Edge e;
      e.id = je.at("id").get<std::string>();
      e.from = je.at("from").get<std::string>();
      e.to = je.at("to").get<std::string>();
      e.length_m = je.at("length_m").get<double>();
      e.lanes = je.at("lanes").get<int>();
      e.speed_limit_mps = je.at("speed_limit_mps").get<double>();
      e.turns.assign(static_cast<size_t>(std::max(e.lanes, 0)), {});
      if (je.contains("turns")) {
        for (auto it = je.at("turns").begin(); it != je.at("turns").end(); ++it) {
          const int lane = static_cast<int>(parse_lane_key(it.key(), e.id));
          if (lane < 0 || lane >= e.lanes)
            throw ParseError("edge '" + e.id + "' turn lane index " + it.key() + " out of range");
          e.turns[lane] = it.value().get<std::vector<std::string>>();
          std::sort(e.turns[lane].begin(), e.turns[lane].end());
        }
      }
      edges.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw ParseError(std::string("malformed edge entry: ") + ex.what());
  }

  // Materialize default plans for signalized nodes without one.
  std::map<std::string, std::vector<const Edge*>> incoming_by_node;
  for (const auto& e : edges) incoming_by_node[e.to].push_back(&e);
  for (auto& n : nodes) {
    if (n.control == NodeControl::signalized && !n.signal)
      n.signal = default_signal_plan(incoming_by_node[n.id], node_pos);
  }

  return RoadNetwork(std::move(nodes), std::move(edges));
}

inline RoadNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file '" + path.string() + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& ex) {
    throw ParseError("network file '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return network_from_json(doc);
}

inline std::string network_to_string(const RoadNetwork& net) {
  return network_to_json(net).dump(2) + "\n";
}

inline void save_network(const RoadNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write network file '" + path.string() + "'");
  out << network_to_string(net);
}

// --- Synthetic grid ----------------------------------------------------------

namespace detail {

/// Turn geometry relative to the incoming heading, in a frame where "left"
/// means counterclockwise.
enum class TurnKind { straight, left, right, reverse };

inline TurnKind classify_turn(double ux, double uy, double vx, double vy) {
  const double cross = ux * vy - uy * vx;
  const double dot = ux * vx + uy * vy;
  if (std::abs(cross) < 1e-9) return dot > 0.0 ? TurnKind::straight : TurnKind::reverse;
  return cross > 0.0 ? TurnKind::left : TurnKind::right;
}

}  // namespace detail

/// Generates a rows x cols bidirectional grid. Two-lane roads are assigned per
/// undirected pair and signalized intersections per node, both drawn
/// deterministically from the seed to match the requested shares within
/// rounding. Speed limits mirror the arterial/local split: 13.89 m/s on
/// two-lane edges, 8.33 m/s on one-lane edges. Two-lane edges split their
/// turns: lane 0 (rightmost) carries right turns, lane 1 left turns, straight
/// movements both; one-lane edges permit every non-reverse movement.
inline RoadNetwork generate_grid(int rows, int cols, double block_len_m, double two_lane_share,
                                 double signalized_share, uint64_t seed) {
  if (rows < 2 || cols < 2) throw InvalidParam("generate_grid: rows and cols must be >= 2");
  if (!(block_len_m > 0.0)) throw InvalidParam("generate_grid: block_len_m must be > 0");
  if (two_lane_share < 0.0 || two_lane_share > 1.0)
    throw InvalidParam("generate_grid: two_lane_share must be in [0,1]");
  if (signalized_share < 0.0 || signalized_share > 1.0)
    throw InvalidParam("generate_grid: signalized_share must be in [0,1]");

  auto node_id = [](int r, int c) { return strfmt("n%d_%d", r, c); };

  std::vector<Node> nodes;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      Node n;
      n.id = node_id(r, c);
      n.x = c * block_len_m;
      n.y = r * block_len_m;
      nodes.push_back(std::move(n));
    }

  // Undirected neighbor pairs in deterministic row-major order.
  std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>> pairs;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c + 1 < cols; ++c) pairs.push_back({{r, c}, {r, c + 1}});
  for (int r = 0; r + 1 < rows; ++r)
    for (int c = 0; c < cols; ++c) pairs.push_back({{r, c}, {r + 1, c}});

  Rng rng(mix_seed(seed));
  std::vector<size_t> pair_order(pairs.size());
  for (size_t i = 0; i < pair_order.size(); ++i) pair_order[i] = i;
  rng.shuffle(pair_order);
  const size_t two_lane_count =
      static_cast<size_t>(std::lround(two_lane_share * static_cast<double>(pairs.size())));
  std::vector<char> two_lane(pairs.size(), 0);
  for (size_t i = 0; i < two_lane_count && i < pair_order.size(); ++i) two_lane[pair_order[i]] = 1;

  std::vector<size_t> node_order(nodes.size());
  for (size_t i = 0; i < node_order.size(); ++i) node_order[i] = i;
  rng.shuffle(node_order);
  const size_t signal_count =
      static_cast<size_t>(std::lround(signalized_share * static_cast<double>(nodes.size())));
  for (size_t i = 0; i < signal_count && i < node_order.size(); ++i)
    nodes[node_order[i]].control = NodeControl::signalized;

  auto edge_id = [&](const std::pair<int, int>& a, const std::pair<int, int>& b) {
    return strfmt("e%d_%d__%d_%d", a.first, a.second, b.first, b.second);
  };

  std::vector<Edge> edges;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& [a, b] = pairs[i];
    const int lanes = two_lane[i] ? 2 : 1;
    const double limit = two_lane[i] ? 13.89 : 8.33;
    for (int dir = 0; dir < 2; ++dir) {
      Edge e;
      const auto& s = dir == 0 ? a : b;
      const auto& t = dir == 0 ? b : a;
      e.id = edge_id(s, t);
      e.from = node_id(s.first, s.second);
      e.to = node_id(t.first, t.second);
      e.length_m = block_len_m;
      e.lanes = lanes;
      e.speed_limit_mps = limit;
      edges.push_back(std::move(e));
    }
  }

  // Turn permissions from geometry; reverse (U-turn) movements are excluded.
  std::map<std::string, std::vector<size_t>> outgoing_at;
  std::map<std::string, std::pair<double, double>> pos;
  for (const auto& n : nodes) pos[n.id] = {n.x, n.y};
  for (size_t i = 0; i < edges.size(); ++i) outgoing_at[edges[i].from].push_back(i);

  for (auto& e : edges) {
    e.turns.assign(static_cast<size_t>(e.lanes), {});
    const auto [fx, fy] = pos[e.from];
    const auto [tx, ty] = pos[e.to];
    const double ux = tx - fx, uy = ty - fy;
    for (size_t oi : outgoing_at[e.to]) {
      const Edge& out = edges[oi];
      const auto [ox, oy] = pos[out.to];
      const auto kind = detail::classify_turn(ux, uy, ox - tx, oy - ty);
      if (kind == detail::TurnKind::reverse) continue;
      if (e.lanes == 1) {
        e.turns[0].push_back(out.id);
      } else {
        if (kind == detail::TurnKind::right || kind == detail::TurnKind::straight)
          e.turns[0].push_back(out.id);
        if (kind == detail::TurnKind::left || kind == detail::TurnKind::straight)
          e.turns[e.turns.size() - 1].push_back(out.id);
      }
    }
    for (auto& lane : e.turns) std::sort(lane.begin(), lane.end());
  }

  // Signal plans: two phases grouped by approach axis.
  std::map<std::string, std::vector<const Edge*>> incoming_by_node;
  for (const auto& e : edges) incoming_by_node[e.to].push_back(&e);
  for (auto& n : nodes) {
    if (n.control == NodeControl::signalized)
      n.signal = default_signal_plan(incoming_by_node[n.id], pos);
  }

  return RoadNetwork(std::move(nodes), std::move(edges));
}

}  // namespace lanesim
