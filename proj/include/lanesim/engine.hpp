#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lanesim/common.hpp"
#include "lanesim/config.hpp"
#include "lanesim/demand.hpp"
#include "lanesim/dynamics.hpp"
#include "lanesim/metrics.hpp"
#include "lanesim/network.hpp"
#include "lanesim/outputs.hpp"
#include "lanesim/rng.hpp"
#include "lanesim/routing.hpp"

namespace lanesim {

/// Read-only snapshot of one vehicle at a step boundary, for observers.
struct VehicleView {
  uint32_t id = 0;
  int edge = -1;
  int lane = 0;
  double pos = 0.0;
  double speed = 0.0;
  bool mid_change = false;
  int target_lane = -1;
  VehicleClass vehicle_class = VehicleClass::cv;
};

/// Called after every completed step with the end-of-step time and all active
/// vehicles in ascending id order.
using StepObserver = std::function<void(double t_end, const std::vector<VehicleView>&)>;

/// Discrete-time microsimulation of one scenario. Owns all mutable state of a
/// run; the network is shared read-only. Deterministic for a given config:
/// vehicles are iterated in ascending id within every phase and a single
/// seeded RNG stream feeds the dawdling draws.
class Simulation {
 public:
  Simulation(const RoadNetwork& net, const ScenarioConfig& cfg) : net_(net), cfg_(cfg) {
    cfg_.validate();
    const auto& edges = net_.edges();
    edge_len_.reserve(edges.size());
    edge_limit_.reserve(edges.size());
    edge_lane_count_.reserve(edges.size());
    lane_offset_.reserve(edges.size());
    int lane_total = 0;
    for (const auto& e : edges) {
      edge_len_.push_back(e.length_m);
      edge_limit_.push_back(e.speed_limit_mps);
      edge_lane_count_.push_back(e.lanes);
      lane_offset_.push_back(lane_total);
      lane_total += e.lanes;
    }
    lanes_.resize(static_cast<size_t>(lane_total));
    build_signal_windows();
  }

  RunOutput run(const std::vector<Departure>& schedule, const StepObserver& observer = {}) {
    const double dt = cfg_.engine.time_step_s;
    const auto steps = static_cast<uint64_t>(std::ceil(cfg_.horizon_s / dt - 1e-9));
    init_run(schedule);

    for (uint64_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      insert_pending(t);
      update_signals(t);
      evaluate_lane_changes(t);
      compute_speeds();
      integrate_positions(t);
      settle_lane_changes(t);
      housekeeping(t);
      if (observer) observer(t + dt, snapshot());
    }
    finalize_run();
    return std::move(out_);
  }

  /// Whether the given edge shows green at time t (unsignalized edges always do).
  bool green_at(int edge, double t) const {
    const auto& windows = green_windows_[static_cast<size_t>(edge)];
    if (windows.empty()) return true;
    const double phase_t = std::fmod(t, signal_cycle_[static_cast<size_t>(edge)]);
    for (const auto& [gs, ge] : windows)
      if (phase_t >= gs - 1e-9 && phase_t < ge - 1e-9) return true;
    return false;
  }

  static constexpr uint32_t kNone = std::numeric_limits<uint32_t>::max();

  struct PendingChange {
    uint32_t id;
    int edge;
    int target_lane;
    uint32_t leader;  // shared-gap key; kNone if the target gap is open-ended
    double pos;
    LaneChangeReason reason;
    uint32_t follower;
    double follower_gap;
  };

  /// Arbitration for simultaneous changes into the same gap: candidates
  /// sharing (edge, target lane, prospective leader) are serialized
  /// upstream-first, so only the smallest-position vehicle moves this step.
  static std::vector<PendingChange> resolve_shared_gaps(std::vector<PendingChange> candidates) {
    std::sort(candidates.begin(), candidates.end(),
              [](const PendingChange& a, const PendingChange& b) {
                if (a.edge != b.edge) return a.edge < b.edge;
                if (a.target_lane != b.target_lane) return a.target_lane < b.target_lane;
                if (a.leader != b.leader) return a.leader < b.leader;
                if (a.pos != b.pos) return a.pos < b.pos;
                return a.id < b.id;
              });
    std::vector<PendingChange> winners;
    for (size_t i = 0; i < candidates.size(); ++i) {
      const PendingChange& c = candidates[i];
      if (i > 0) {
        const PendingChange& p = candidates[i - 1];
        if (p.edge == c.edge && p.target_lane == c.target_lane && p.leader == c.leader) continue;
      }
      winners.push_back(c);
    }
    return winners;
  }

 private:

  struct LcProgress {
    int target_lane = 0;
    double remaining_s = 0.0;
    LaneChangeReason reason = LaneChangeReason::strategic;
  };

  std::vector<VehicleView> snapshot() const {
    std::vector<VehicleView> views;
    views.reserve(active_.size());
    for (uint32_t id : active_) {
      const Vehicle& v = vehicles_[id];
      VehicleView view;
      view.id = id;
      view.edge = v.edge;
      view.lane = v.lane;
      view.pos = v.pos;
      view.speed = v.speed;
      view.mid_change = v.lc.has_value();
      view.target_lane = v.lc ? v.lc->target_lane : -1;
      view.vehicle_class = v.profile->vehicle_class;
      views.push_back(view);
    }
    return views;
  }

  struct Vehicle {
    const DriverProfile* profile = nullptr;
    std::vector<int> route;
    size_t route_pos = 0;
    int edge = -1;
    int lane = 0;
    double pos = 0.0;  // front bumper, m from edge start
    double speed = 0.0;
    std::optional<LcProgress> lc;
    double depart_time = 0.0;
    double stuck_s = 0.0;
    double cooldown_until = 0.0;
    // Courtesy-braking bookkeeping: who this vehicle yields to this/last step,
    // and the speed it would have driven without yielding.
    uint32_t yielding_to = kNone;
    uint32_t yielded_to_prev = kNone;
    double uncapped_speed_prev = 0.0;
    bool active = false;
  };

  // --- setup ----------------------------------------------------------------

  void build_signal_windows() {
    green_windows_.assign(net_.edges().size(), {});
    signal_cycle_.assign(net_.edges().size(), 0.0);
    for (size_t n = 0; n < net_.nodes().size(); ++n) {
      const Node& node = net_.nodes()[n];
      if (node.control != NodeControl::signalized || !node.signal) continue;
      const SignalPlan& plan = *node.signal;
      double start = 0.0;
      for (const auto& ph : plan.phases) {
        for (const auto& eid : ph.served) {
          const int e = net_.edge_index(eid);
          green_windows_[static_cast<size_t>(e)].push_back({start, start + ph.green_s});
          signal_cycle_[static_cast<size_t>(e)] = plan.cycle_s;
        }
        start += ph.green_s + ph.yellow_s;
      }
    }
    gated_edges_.clear();
    for (size_t e = 0; e < green_windows_.size(); ++e)
      if (!green_windows_[e].empty()) gated_edges_.push_back(static_cast<int>(e));
    green_now_.assign(net_.edges().size(), true);
  }

  void init_run(const std::vector<Departure>& schedule) {
    out_ = RunOutput{};
    out_.measure_interval_s = cfg_.engine.measure_interval_s;
    const auto n_intervals = static_cast<size_t>(
        std::ceil(cfg_.horizon_s / cfg_.engine.measure_interval_s - 1e-9));
    out_.scheduled_departures_per_interval.assign(std::max<size_t>(n_intervals, 1), 0);
    for (const auto& d : schedule) {
      const auto bin = static_cast<size_t>(d.time_s / cfg_.engine.measure_interval_s);
      if (bin < out_.scheduled_departures_per_interval.size())
        ++out_.scheduled_departures_per_interval[bin];
    }

    schedule_ = &schedule;
    next_departure_ = 0;
    vehicles_.assign(schedule.size(), Vehicle{});
    active_.clear();
    for (auto& lane : lanes_) lane.clear();
    entry_queues_.assign(net_.edges().size(), {});
    queued_edges_.clear();

    rng_.emplace(sub_seed(cfg_.engine.seed, 0xe17e));
    weights_ = free_flow_weights(net_);
    minute_speed_sum_.assign(net_.edges().size(), 0.0);
    minute_count_sum_.assign(net_.edges().size(), 0.0);
    minute_window_.clear();
    interval_speed_sum_.assign(net_.edges().size(), 0.0);
    interval_count_sum_.assign(net_.edges().size(), 0.0);
    interval_steps_ = 0;
    interval_start_ = 0.0;
    new_speed_.assign(schedule.size(), 0.0);
  }

  // --- occupancy ------------------------------------------------------------

  std::vector<uint32_t>& lane_list(int edge, int lane) {
    return lanes_[static_cast<size_t>(lane_offset_[static_cast<size_t>(edge)] + lane)];
  }

  // Index of the first vehicle strictly behind position `pos` in a
  // front-to-back sorted lane list, skipping entries belonging to `self`.
  size_t partition_behind(const std::vector<uint32_t>& list, double pos) const {
    size_t lo = 0, hi = list.size();
    while (lo < hi) {
      const size_t mid = (lo + hi) / 2;
      if (vehicles_[list[mid]].pos > pos)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  std::optional<uint32_t> leader_in_lane(int edge, int lane, double pos, uint32_t self) {
    const auto& list = lane_list(edge, lane);
    const size_t idx = partition_behind(list, pos);
    // Everything before idx is strictly ahead; self sits at pos exactly and so
    // never lands in that range.
    if (idx > 0 && list[idx - 1] != self) return list[idx - 1];
    if (idx > 1 && list[idx - 1] == self) return list[idx - 2];
    return std::nullopt;
  }

  std::optional<uint32_t> follower_in_lane(int edge, int lane, double pos, uint32_t self) {
    const auto& list = lane_list(edge, lane);
    for (size_t idx = partition_behind(list, pos); idx < list.size(); ++idx) {
      if (list[idx] != self) return list[idx];
    }
    return std::nullopt;
  }

  void lane_insert(int edge, int lane, uint32_t id) {
    auto& list = lane_list(edge, lane);
    const size_t idx = partition_behind(list, vehicles_[id].pos);
    list.insert(list.begin() + static_cast<std::ptrdiff_t>(idx), id);
  }

  void lane_erase(int edge, int lane, uint32_t id) {
    auto& list = lane_list(edge, lane);
    auto it = std::find(list.begin(), list.end(), id);
    if (it != list.end()) list.erase(it);
  }

  void remove_from_network(uint32_t id) {
    Vehicle& v = vehicles_[id];
    lane_erase(v.edge, v.lane, id);
    if (v.lc) lane_erase(v.edge, v.lc->target_lane, id);
    v.active = false;
    auto it = std::lower_bound(active_.begin(), active_.end(), id);
    if (it != active_.end() && *it == id) active_.erase(it);
  }

  // --- insertion --------------------------------------------------------------

  void insert_pending(double t) {
    // Move due departures into their origin queues, routing them at departure.
    while (next_departure_ < schedule_->size() &&
           (*schedule_)[next_departure_].time_s <= t + 1e-9) {
      const Departure& d = (*schedule_)[next_departure_];
      const auto id = static_cast<uint32_t>(next_departure_);
      ++next_departure_;
      const int o = net_.edge_index(d.origin);
      const int dest = net_.edge_index(d.destination);
      if (o < 0) throw ValidationError(d.origin, "departure references unknown edge '" + d.origin + "'");
      if (dest < 0)
        throw ValidationError(d.destination,
                              "departure references unknown edge '" + d.destination + "'");
      Vehicle& v = vehicles_[id];
      v.profile = d.profile;
      try {
        v.route = astar_fastest_idx(net_, weights_, o, dest);
      } catch (const Unreachable&) {
        ++out_.counters.unroutable;
        continue;
      }
      if (entry_queues_[static_cast<size_t>(o)].empty()) insert_sorted(queued_edges_, o);
      entry_queues_[static_cast<size_t>(o)].push_back(id);
    }

    // FIFO retry per origin edge, ascending edge index.
    for (size_t qi = 0; qi < queued_edges_.size();) {
      const int e = queued_edges_[qi];
      auto& queue = entry_queues_[static_cast<size_t>(e)];
      bool blocked = false;
      while (!queue.empty()) {
        if (!try_insert(queue.front(), e, t)) {
          ++out_.counters.insertion_denied;
          blocked = true;
          break;
        }
        queue.pop_front();
      }
      if (queue.empty() && !blocked) {
        queued_edges_.erase(queued_edges_.begin() + static_cast<std::ptrdiff_t>(qi));
      } else {
        ++qi;
      }
    }
  }

  bool try_insert(uint32_t id, int edge, double t) {
    Vehicle& v = vehicles_[id];
    const CarFollowingParams& cf = v.profile->cf;
    const double limit = edge_limit_[static_cast<size_t>(edge)];

    // Least-occupied lane among those permitting the onward turn; ties toward
    // lane 0.
    const int n_lanes = edge_lane_count_[static_cast<size_t>(edge)];
    const int next = v.route.size() > 1 ? v.route[1] : -1;
    int lane = -1;
    size_t best_occ = 0;
    for (int l = 0; l < n_lanes; ++l) {
      if (next >= 0 && !lane_permits(edge, l, next)) continue;
      const size_t occ = lane_list(edge, l).size();
      if (lane < 0 || occ < best_occ) {
        lane = l;
        best_occ = occ;
      }
    }
    if (lane < 0) lane = 0;

    const auto& list = lane_list(edge, lane);
    double entry_speed = limit;
    if (!list.empty()) {
      const Vehicle& last = vehicles_[list.back()];
      const double raw_gap = last.pos - cfg_.engine.vehicle_length_m;
      if (raw_gap < secure_gap(0.5 * limit, last.speed, cf)) return false;
      entry_speed = std::min(
          limit, safe_speed(std::max(0.0, raw_gap - cf.min_gap), last.speed, limit, cf));
    }

    v.edge = edge;
    v.lane = lane;
    v.pos = 0.0;
    v.speed = entry_speed;
    v.depart_time = t;
    v.active = true;
    lane_list(edge, lane).push_back(id);
    insert_sorted(active_, id);
    ++out_.counters.inserted;
    return true;
  }

  // --- signals ----------------------------------------------------------------

  void update_signals(double t) {
    for (int e : gated_edges_) green_now_[static_cast<size_t>(e)] = green_at(e, t);
  }

  bool lane_permits(int edge, int lane, int next_edge) const {
    const auto& turns = net_.lane_turns(edge)[static_cast<size_t>(lane)];
    return std::find(turns.begin(), turns.end(), next_edge) != turns.end();
  }

  // --- lane changes -------------------------------------------------------------

  double anticipated_speed(int edge, int lane, double pos, uint32_t self) {
    const double limit = edge_limit_[static_cast<size_t>(edge)];
    if (auto lead = leader_in_lane(edge, lane, pos, self)) {
      const Vehicle& l = vehicles_[*lead];
      if (l.pos - pos <= 100.0) return std::min(limit, l.speed);
    }
    return limit;
  }

  void evaluate_lane_changes(double t) {
    pending_.clear();
    const double veh_len = cfg_.engine.vehicle_length_m;

    for (uint32_t id : active_) {
      Vehicle& v = vehicles_[id];
      if (v.lc || t < v.cooldown_until - 1e-9) continue;
      const int e = v.edge;
      const int n_lanes = edge_lane_count_[static_cast<size_t>(e)];
      if (n_lanes < 2) continue;

      DesireContext ctx;
      ctx.lane = v.lane;
      ctx.lane_count = n_lanes;
      ctx.speed = v.speed;
      ctx.dist_to_end = edge_len_[static_cast<size_t>(e)] - v.pos;
      ctx.has_next_edge = v.route_pos + 1 < v.route.size();
      const int next = ctx.has_next_edge ? v.route[v.route_pos + 1] : -1;
      for (int l = 0; l < n_lanes && l < DesireContext::max_lanes; ++l) {
        ctx.permits_next[static_cast<size_t>(l)] = next < 0 || lane_permits(e, l, next);
        ctx.anticipated_speed[static_cast<size_t>(l)] = anticipated_speed(e, l, v.pos, id);
      }

      const auto desire = lane_change_desire(ctx, v.profile->lc, cfg_.engine.desire);
      if (!desire) continue;

      const int target = desire->target_lane;
      std::optional<NeighborGap> lead_gap, fol_gap;
      uint32_t leader_id = kNone, follower_id = kNone;
      if (auto lead = leader_in_lane(e, target, v.pos, id)) {
        leader_id = *lead;
        const Vehicle& l = vehicles_[*lead];
        lead_gap = NeighborGap{l.pos - veh_len - v.pos, l.speed};
      }
      if (auto fol = follower_in_lane(e, target, v.pos, id)) {
        follower_id = *fol;
        const Vehicle& f = vehicles_[*fol];
        fol_gap = NeighborGap{v.pos - veh_len - f.pos, f.speed};
      }

      const double assertive = v.profile->lc.assertive;
      if (gap_check(v.speed, v.profile->cf, assertive, lead_gap, fol_gap)) {
        pending_.push_back({id, e, target, leader_id, v.pos, desire->reason, follower_id,
                            fol_gap ? fol_gap->gap : 0.0});
      } else if (desire->reason == LaneChangeReason::strategic && follower_id != kNone) {
        // Blocked strategic desire: ask the would-be follower to yield.
        Vehicle& f = vehicles_[follower_id];
        if (f.yielding_to == kNone) f.yielding_to = id;
      }
    }

    for (const PendingChange& c : resolve_shared_gaps(std::move(pending_)))
      start_lane_change(c, t);
    pending_.clear();
  }

  void start_lane_change(const PendingChange& c, double t) {
    Vehicle& v = vehicles_[c.id];
    LaneChangeReason reason = c.reason;
    // A strategic change that only became possible because the new follower
    // was yielding is what the model calls a cooperative maneuver.
    if (c.follower != kNone) {
      const Vehicle& f = vehicles_[c.follower];
      if (f.yielded_to_prev == c.id &&
          c.follower_gap <
              required_gap(f.uncapped_speed_prev, v.speed, v.profile->cf, v.profile->lc.assertive))
        reason = LaneChangeReason::cooperative;
    }
    v.lc = LcProgress{c.target_lane, cfg_.engine.lc_duration_s, reason};
    lane_insert(c.edge, c.target_lane, c.id);

    LaneChangeRecord rec;
    rec.time = t;
    rec.vehicle = c.id;
    rec.vehicle_class = v.profile->vehicle_class;
    rec.style = v.profile->style;
    rec.edge = net_.edges()[static_cast<size_t>(c.edge)].id;
    rec.from_lane = v.lane;
    rec.to_lane = c.target_lane;
    rec.reason = reason;
    out_.lane_changes.push_back(std::move(rec));
  }

  // --- longitudinal update --------------------------------------------------

  bool edge_end_gated(const Vehicle& v) {
    const int e = v.edge;
    if (v.lc) return true;  // finish the maneuver before crossing the node
    if (!green_now_[static_cast<size_t>(e)]) return true;
    if (v.route_pos + 1 >= v.route.size()) return false;  // exit is free on green
    const int next = v.route[v.route_pos + 1];
    if (!lane_permits(e, v.lane, next)) return true;
    // Predict whether the entry lane can take one more vehicle.
    const int entry = choose_entry_lane(v, next);
    const auto& list = lane_list(next, entry);
    if (!list.empty()) {
      const Vehicle& last = vehicles_[list.back()];
      if (last.pos - cfg_.engine.vehicle_length_m < v.profile->cf.min_gap) return true;
    }
    return false;
  }

  int choose_entry_lane(const Vehicle& v, int next_edge) {
    const int n_lanes = edge_lane_count_[static_cast<size_t>(next_edge)];
    if (n_lanes == 1) return 0;
    const int following =
        v.route_pos + 2 < v.route.size() ? v.route[v.route_pos + 2] : -1;
    int best = -1;
    bool best_permits = false;
    size_t best_occ = 0;
    for (int l = 0; l < n_lanes; ++l) {
      const bool permits = following < 0 || lane_permits(next_edge, l, following);
      const size_t occ = lane_list(next_edge, l).size();
      if (best < 0 || (permits && !best_permits) ||
          (permits == best_permits && occ < best_occ)) {
        best = l;
        best_permits = permits;
        best_occ = occ;
      }
    }
    return best;
  }

  void compute_speeds() {
    const double dt = cfg_.engine.time_step_s;
    const double veh_len = cfg_.engine.vehicle_length_m;

    for (uint32_t id : active_) {
      Vehicle& v = vehicles_[id];
      const CarFollowingParams& cf = v.profile->cf;
      const double rand01 = rng_->uniform01();
      const int e = v.edge;
      const double limit = edge_limit_[static_cast<size_t>(e)];

      double v_safe_bound = std::numeric_limits<double>::infinity();
      auto constrain_leader = [&](int lane) {
        if (auto lead = leader_in_lane(e, lane, v.pos, id)) {
          const Vehicle& l = vehicles_[*lead];
          const double eff_gap = std::max(0.0, l.pos - veh_len - v.pos - cf.min_gap);
          v_safe_bound = std::min(v_safe_bound, safe_speed(eff_gap, l.speed, v.speed, cf));
        }
      };
      constrain_leader(v.lane);
      if (v.lc) constrain_leader(v.lc->target_lane);

      if (edge_end_gated(v)) {
        const double dist = std::max(0.0, edge_len_[static_cast<size_t>(e)] - v.pos);
        v_safe_bound = std::min(v_safe_bound, safe_speed(dist, 0.0, v.speed, cf));
      }

      double next_speed = update_speed(v.speed, v_safe_bound, limit, cf, dt, rand01);
      if (v.yielding_to != kNone) {
        // Courtesy braking: cap at half the safe speed for this step.
        const double cap = 0.5 * std::min(v_safe_bound, limit);
        v.uncapped_speed_prev = next_speed;
        next_speed = std::min(next_speed, cap);
      }
      new_speed_[id] = next_speed;
    }
  }

  void integrate_positions(double t) {
    const double dt = cfg_.engine.time_step_s;
    const double veh_len = cfg_.engine.vehicle_length_m;
    // Iterate over a copy: arrivals mutate the active list.
    scratch_ids_.assign(active_.begin(), active_.end());

    for (uint32_t id : scratch_ids_) {
      Vehicle& v = vehicles_[id];
      v.speed = new_speed_[id];
      v.pos += v.speed * dt;
      const double len = edge_len_[static_cast<size_t>(v.edge)];
      if (v.pos < len - 1e-12) continue;

      // Recheck the gate with live state; a gated vehicle stays at the line.
      if (v.lc || !green_now_[static_cast<size_t>(v.edge)]) {
        if (!green_now_[static_cast<size_t>(v.edge)] && cfg_.engine.check_invariants &&
            v.pos > len + 1e-9)
          ++out_.violations.red_crossing;
        hold_at_line(v, len);
        continue;
      }

      if (v.route_pos + 1 >= v.route.size()) {  // trip complete
        remove_from_network(id);
        TripRecord trip;
        trip.vehicle = id;
        trip.vehicle_class = v.profile->vehicle_class;
        trip.style = v.profile->style;
        trip.depart = v.depart_time;
        trip.arrive = t + dt;
        trip.completed = true;
        out_.trips.push_back(trip);
        ++out_.counters.arrived;
        continue;
      }

      const int next = v.route[v.route_pos + 1];
      if (!lane_permits(v.edge, v.lane, next)) {
        hold_at_line(v, len);
        continue;
      }
      const int entry = choose_entry_lane(v, next);
      const auto& entry_list = lane_list(next, entry);
      double entry_cap = std::numeric_limits<double>::infinity();
      if (!entry_list.empty()) {
        const Vehicle& last = vehicles_[entry_list.back()];
        entry_cap = last.pos - veh_len - v.profile->cf.min_gap;
      }
      if (entry_cap < 0.0) {
        hold_at_line(v, len);
        continue;
      }
      const double carryover = std::min(v.pos - len, entry_cap);
      lane_erase(v.edge, v.lane, id);
      v.edge = next;
      v.lane = entry;
      v.pos = std::max(0.0, carryover);
      v.speed = std::min(v.speed, edge_limit_[static_cast<size_t>(next)]);
      ++v.route_pos;
      lane_list(next, entry).push_back(id);
    }
  }

  void hold_at_line(Vehicle& v, double len) {
    v.pos = std::min(v.pos, len - 1e-9);
    v.speed = 0.0;
  }

  void settle_lane_changes(double t) {
    const double dt = cfg_.engine.time_step_s;
    for (uint32_t id : active_) {
      Vehicle& v = vehicles_[id];
      if (!v.lc) continue;
      v.lc->remaining_s -= dt;
      if (v.lc->remaining_s > 1e-9) continue;
      lane_erase(v.edge, v.lane, id);
      v.lane = v.lc->target_lane;
      v.lc.reset();
      v.cooldown_until = t + dt + cfg_.engine.lc_cooldown_s;
    }
  }

  // --- end-of-step bookkeeping ------------------------------------------------

  void housekeeping(double t) {
    const double dt = cfg_.engine.time_step_s;
    const double t_end = t + dt;

    // Stuck-vehicle removal.
    scratch_ids_.assign(active_.begin(), active_.end());
    for (uint32_t id : scratch_ids_) {
      Vehicle& v = vehicles_[id];
      v.stuck_s = v.speed < 0.1 ? v.stuck_s + dt : 0.0;
      if (v.stuck_s >= cfg_.engine.teleport_timeout_s - 1e-9) {
        remove_from_network(id);
        TripRecord trip;
        trip.vehicle = id;
        trip.vehicle_class = v.profile->vehicle_class;
        trip.style = v.profile->style;
        trip.depart = v.depart_time;
        trip.arrive = t_end;
        trip.completed = false;
        out_.trips.push_back(trip);
        ++out_.counters.removed_stuck;
      }
    }

    // Shift courtesy marks to the previous-step slot.
    for (uint32_t id : active_) {
      Vehicle& v = vehicles_[id];
      v.yielded_to_prev = v.yielding_to;
      v.yielding_to = kNone;
    }

    // Sample instantaneous state into interval and routing accumulators.
    for (uint32_t id : active_) {
      const Vehicle& v = vehicles_[id];
      const auto e = static_cast<size_t>(v.edge);
      interval_speed_sum_[e] += v.speed;
      interval_count_sum_[e] += 1.0;
      minute_speed_sum_[e] += v.speed;
      minute_count_sum_[e] += 1.0;
    }
    ++interval_steps_;

    if (cfg_.engine.check_invariants) check_invariants();

    // Routing weights from the trailing window, refreshed each minute.
    if (at_multiple(t_end, cfg_.engine.routing_refresh_s)) {
      minute_window_.push_back({minute_speed_sum_, minute_count_sum_});
      const auto keep = static_cast<size_t>(
          std::round(cfg_.engine.routing_window_s / cfg_.engine.routing_refresh_s));
      while (minute_window_.size() > std::max<size_t>(keep, 1)) minute_window_.pop_front();
      std::fill(minute_speed_sum_.begin(), minute_speed_sum_.end(), 0.0);
      std::fill(minute_count_sum_.begin(), minute_count_sum_.end(), 0.0);
      refresh_weights(t_end);
    }

    if (at_multiple(t_end, cfg_.engine.measure_interval_s) || t_end >= cfg_.horizon_s - 1e-9)
      flush_interval(t_end);
  }

  static bool at_multiple(double t, double period) {
    const double q = t / period;
    return std::abs(q - std::round(q)) < 1e-9;
  }

  void refresh_weights(double now) {
    std::vector<EdgeMeasure> window;
    for (const auto& [speed_sum, count_sum] : minute_window_) {
      for (size_t e = 0; e < speed_sum.size(); ++e) {
        if (count_sum[e] <= 0.0) continue;
        EdgeMeasure m;
        m.edge = net_.edges()[e].id;
        m.mean_speed = speed_sum[e] / count_sum[e];
        m.mean_count = count_sum[e];
        window.push_back(std::move(m));
      }
    }
    weights_ = weights_from_measures(net_, window, now);
  }

  void flush_interval(double t_end) {
    if (interval_steps_ == 0) return;
    const auto steps = static_cast<double>(interval_steps_);
    for (size_t e = 0; e < interval_count_sum_.size(); ++e) {
      EdgeMeasure m;
      m.interval_start = interval_start_;
      m.edge = net_.edges()[e].id;
      m.mean_count = interval_count_sum_[e] / steps;
      m.mean_speed =
          interval_count_sum_[e] > 0.0 ? interval_speed_sum_[e] / interval_count_sum_[e] : 0.0;
      m.density = m.mean_count / edge_len_[e];
      out_.edge_measures.push_back(std::move(m));
    }
    std::fill(interval_speed_sum_.begin(), interval_speed_sum_.end(), 0.0);
    std::fill(interval_count_sum_.begin(), interval_count_sum_.end(), 0.0);
    interval_steps_ = 0;
    interval_start_ = t_end;
  }

  void check_invariants() {
    // Conservation: inserted = arrived + active + removed.
    if (out_.counters.inserted !=
        out_.counters.arrived + out_.counters.removed_stuck + active_.size())
      ++out_.violations.conservation;

    // Per-lane ordering: positions strictly decreasing front-to-back, raw gaps
    // never negative beyond numerical tolerance.
    const double veh_len = cfg_.engine.vehicle_length_m;
    for (size_t e = 0; e < edge_len_.size(); ++e) {
      for (int l = 0; l < edge_lane_count_[e]; ++l) {
        const auto& list = lane_list(static_cast<int>(e), l);
        for (size_t i = 0; i + 1 < list.size(); ++i) {
          const double front = vehicles_[list[i]].pos;
          const double back = vehicles_[list[i + 1]].pos;
          if (front - veh_len - back < -1e-6) ++out_.violations.ordering;
        }
        for (uint32_t id : list) {
          if (vehicles_[id].pos > edge_len_[e] + 1e-9 &&
              !green_now_[e])
            ++out_.violations.red_crossing;
        }
      }
    }
  }

  void finalize_run() {
    flush_interval(cfg_.horizon_s);
    out_.counters.active_at_end = active_.size();
    for (uint32_t id : active_) {
      const Vehicle& v = vehicles_[id];
      TripRecord trip;
      trip.vehicle = id;
      trip.vehicle_class = v.profile->vehicle_class;
      trip.style = v.profile->style;
      trip.depart = v.depart_time;
      trip.arrive = cfg_.horizon_s;
      trip.completed = false;
      out_.trips.push_back(trip);
    }
    std::sort(out_.trips.begin(), out_.trips.end(),
              [](const TripRecord& a, const TripRecord& b) { return a.vehicle < b.vehicle; });
  }

  static void insert_sorted(std::vector<uint32_t>& xs, uint32_t v) {
    xs.insert(std::lower_bound(xs.begin(), xs.end(), v), v);
  }
  static void insert_sorted(std::vector<int>& xs, int v) {
    xs.insert(std::lower_bound(xs.begin(), xs.end(), v), v);
  }

  const RoadNetwork& net_;
  ScenarioConfig cfg_;

  std::vector<double> edge_len_, edge_limit_;
  std::vector<int> edge_lane_count_, lane_offset_;
  std::vector<std::vector<uint32_t>> lanes_;

  std::vector<std::vector<std::pair<double, double>>> green_windows_;
  std::vector<double> signal_cycle_;
  std::vector<int> gated_edges_;
  std::vector<char> green_now_;

  const std::vector<Departure>* schedule_ = nullptr;
  size_t next_departure_ = 0;
  std::vector<Vehicle> vehicles_;
  std::vector<uint32_t> active_;
  std::vector<std::deque<uint32_t>> entry_queues_;
  std::vector<int> queued_edges_;
  std::vector<PendingChange> pending_;
  std::vector<uint32_t> scratch_ids_;
  std::vector<double> new_speed_;

  std::optional<Rng> rng_;
  EdgeWeights weights_;
  std::vector<double> minute_speed_sum_, minute_count_sum_;
  std::deque<std::pair<std::vector<double>, std::vector<double>>> minute_window_;
  std::vector<double> interval_speed_sum_, interval_count_sum_;
  uint64_t interval_steps_ = 0;
  double interval_start_ = 0.0;

  RunOutput out_;
};

/// Builds the network and demand from a config and executes one run.
inline RunOutput run_scenario(const RoadNetwork& net, const ScenarioConfig& cfg) {
  cfg.validate();
  const ODMatrix od = cfg.od.build(net);
  auto schedule = expand_demand(od, cfg.profile, cfg.horizon_s, sub_seed(cfg.engine.seed, 1));
  assign_fleet(schedule, cfg.fleet, cfg.profiles, sub_seed(cfg.engine.seed, 2));
  Simulation sim(net, cfg);
  RunOutput out = sim.run(schedule);

  // Configured inflow per measurement interval, for the MFD phase split.
  double base_flow = 0.0;
  for (const auto& [pair, flow] : od.entries) base_flow += flow;
  const auto n_intervals = out.scheduled_departures_per_interval.size();
  out.demand_rate_per_interval.resize(n_intervals);
  for (size_t i = 0; i < n_intervals; ++i) {
    const double hour = static_cast<double>(i) * cfg.engine.measure_interval_s / 3600.0;
    out.demand_rate_per_interval[i] = base_flow * cfg.profile.factor(std::floor(hour));
  }
  return out;
}

inline RunOutput run_scenario(const ScenarioConfig& cfg) {
  const RoadNetwork net = cfg.network.build();
  return run_scenario(net, cfg);
}

}  // namespace lanesim
