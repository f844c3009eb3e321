#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "lanesim/common.hpp"

namespace lanesim {

/// Longitudinal (car-following) parameters. Identical for conventional and
/// automated vehicles: the two classes differ only in lateral behavior.
struct CarFollowingParams {
  double max_accel = 2.6;      // m/s^2
  double max_decel = 4.5;      // m/s^2
  double min_gap = 2.5;        // m, standstill buffer kept behind the leader
  double reaction_time = 1.0;  // s (tau); must be >= the simulation step
  double imperfection = 0.5;   // sigma in [0,1], dawdling strength

  void validate() const {
    if (!(max_accel > 0) || !(max_decel > 0) || !(min_gap > 0) || !(reaction_time > 0))
      throw InvalidParam("car-following parameters must be positive");
    if (imperfection < 0.0 || imperfection > 1.0)
      throw InvalidParam("imperfection must be in [0,1]");
  }
};

/// Lane-change behavior multipliers. All dimensionless and > 0.
///   strategic  — scales how early a dead-end lane is abandoned
///   speed_gain — divides the speed-gain threshold for tactical changes
///   keep_right — divides the cost threshold for regulatory (keep-right) changes
///   assertive  — divides the secure gap; lower values demand larger gaps
struct LaneChangeParams {
  double strategic = 1.0;
  double speed_gain = 1.0;
  double keep_right = 1.0;
  double assertive = 1.0;

  void validate() const {
    if (!(strategic > 0) || !(speed_gain > 0) || !(keep_right > 0) || !(assertive > 0))
      throw InvalidParam("lane-change multipliers must be > 0");
  }
};

enum class VehicleClass { cv, av };
enum class DrivingStyle { conservative, moderate, aggressive };
enum class LaneChangeReason { strategic, cooperative, tactical, regulatory };

inline std::string to_string(VehicleClass c) { return c == VehicleClass::av ? "AV" : "CV"; }

inline std::string to_string(DrivingStyle s) {
  switch (s) {
    case DrivingStyle::conservative: return "conservative";
    case DrivingStyle::moderate: return "moderate";
    default: return "aggressive";
  }
}

inline std::string to_string(LaneChangeReason r) {
  switch (r) {
    case LaneChangeReason::strategic: return "strategic";
    case LaneChangeReason::cooperative: return "cooperative";
    case LaneChangeReason::tactical: return "tactical";
    default: return "regulatory";
  }
}

inline VehicleClass vehicle_class_from_string(const std::string& s) {
  if (s == "AV") return VehicleClass::av;
  if (s == "CV") return VehicleClass::cv;
  throw ParseError("unknown vehicle class '" + s + "'");
}

inline DrivingStyle style_from_string(const std::string& s) {
  if (s == "conservative") return DrivingStyle::conservative;
  if (s == "moderate") return DrivingStyle::moderate;
  if (s == "aggressive") return DrivingStyle::aggressive;
  throw ParseError("unknown driving style '" + s + "'");
}

inline LaneChangeReason reason_from_string(const std::string& s) {
  if (s == "strategic") return LaneChangeReason::strategic;
  if (s == "cooperative") return LaneChangeReason::cooperative;
  if (s == "tactical") return LaneChangeReason::tactical;
  if (s == "regulatory") return LaneChangeReason::regulatory;
  throw ParseError("unknown lane-change reason '" + s + "'");
}

struct DriverProfile {
  VehicleClass vehicle_class = VehicleClass::cv;
  DrivingStyle style = DrivingStyle::moderate;
  CarFollowingParams cf;
  LaneChangeParams lc;
};

/// The six (class x style) profiles of a fleet. Index: class * 3 + style.
class ProfileSet {
 public:
  const DriverProfile& get(VehicleClass c, DrivingStyle s) const {
    return profiles_[index(c, s)];
  }
  DriverProfile& get(VehicleClass c, DrivingStyle s) { return profiles_[index(c, s)]; }

  void validate() const {
    for (const auto& p : profiles_) {
      p.cf.validate();
      p.lc.validate();
    }
  }

 private:
  static size_t index(VehicleClass c, DrivingStyle s) {
    return static_cast<size_t>(c) * 3 + static_cast<size_t>(s);
  }
  std::array<DriverProfile, 6> profiles_{};

  friend ProfileSet table1_profiles();
};

/// Built-in default profile set "table1": conventional vehicles keep neutral
/// multipliers with assertive 1.0/1.3/1.6 across styles; automated vehicles use
/// strategic 3.0, speed_gain 5.0, keep_right 1.2 and assertive 0.5/0.7/0.9.
inline ProfileSet table1_profiles() {
  ProfileSet set;
  const std::array<std::pair<VehicleClass, std::array<double, 3>>, 2> assertive_ladder = {{
      {VehicleClass::cv, {1.0, 1.3, 1.6}},
      {VehicleClass::av, {0.5, 0.7, 0.9}},
  }};
  for (const auto& [cls, ladder] : assertive_ladder) {
    for (int s = 0; s < 3; ++s) {
      DriverProfile p;
      p.vehicle_class = cls;
      p.style = static_cast<DrivingStyle>(s);
      if (cls == VehicleClass::av) {
        p.lc.strategic = 3.0;
        p.lc.speed_gain = 5.0;
        p.lc.keep_right = 1.2;
      }
      p.lc.assertive = ladder[static_cast<size_t>(s)];
      set.profiles_[ProfileSet::index(cls, p.style)] = p;
    }
  }
  return set;
}

// --- Longitudinal model ------------------------------------------------------

/// Krauss-style safe speed: the fastest speed at which the follower can still
/// avoid a collision if the leader brakes at max_decel for one reaction time.
/// `gap` is the effective gap (bumper-to-bumper minus any standstill buffer the
/// caller maintains); at gap 0 behind a stopped leader the result is 0.
inline double safe_speed(double gap, double leader_speed, double follower_speed,
                         const CarFollowingParams& cf) {
  const double tau = cf.reaction_time;
  const double denom = (leader_speed + follower_speed) / (2.0 * cf.max_decel) + tau;
  const double v = leader_speed + (gap - leader_speed * tau) / denom;
  return std::max(0.0, v);
}

/// One-step speed update: accelerate toward the minimum of the free, safe and
/// legal speeds, then dawdle by sigma * max_accel * dt * rand01. Applies to CV
/// and AV alike.
inline double update_speed(double v, double v_safe, double v_max, const CarFollowingParams& cf,
                           double dt, double rand01) {
  const double desired = std::min({v + cf.max_accel * dt, v_safe, v_max});
  return std::max(0.0, desired - cf.imperfection * cf.max_accel * dt * rand01);
}

/// Minimum spacing a follower needs behind a leader to stay collision-free
/// under leader braking: tau headway + braking-distance surplus + min_gap.
/// Grows linearly with follower speed at urban speeds.
inline double secure_gap(double follower_speed, double leader_speed,
                         const CarFollowingParams& cf) {
  const double braking =
      std::max(0.0, follower_speed * follower_speed - leader_speed * leader_speed) /
      (2.0 * cf.max_decel);
  return follower_speed * cf.reaction_time + braking + cf.min_gap;
}

/// Gap demanded in the destination lane: the secure gap divided by the
/// assertive multiplier, never below min_gap. Lower assertive values demand
/// larger accepted gaps.
inline double required_gap(double follower_speed, double leader_speed,
                           const CarFollowingParams& cf, double lc_assertive) {
  if (!(lc_assertive > 0.0)) throw InvalidParam("lc_assertive must be > 0");
  return std::max(cf.min_gap, secure_gap(follower_speed, leader_speed, cf) / lc_assertive);
}

// --- Lane-change decision ----------------------------------------------------

/// Everything the desire logic needs to know about the ego vehicle's
/// surroundings. `anticipated_speed[l]` is min(speed limit, leader speed if a
/// leader sits within 100 m ahead on lane l, else the speed limit);
/// `permits_next[l]` says whether lane l may continue onto the next route edge.
struct DesireContext {
  static constexpr int max_lanes = 4;

  int lane = 0;
  int lane_count = 1;
  double speed = 0.0;
  double dist_to_end = 0.0;  // m to the mandatory turn point (edge end)
  bool has_next_edge = false;
  std::array<bool, max_lanes> permits_next{};
  std::array<double, max_lanes> anticipated_speed{};
};

struct LaneChangeDesire {
  int target_lane = 0;
  LaneChangeReason reason = LaneChangeReason::strategic;
};

/// Desire thresholds and horizon constants; the Table I multipliers act on
/// these. Config-exposed.
struct DesireTuning {
  double dv_gain = 1.0;          // m/s, base tactical speed-gain threshold
  double dv_keep = 1.0;          // m/s, base regulatory cost threshold
  double strategic_time_s = 20;  // s, speed-proportional part of the horizon
  double strategic_base_m = 100;  // m, constant part of the horizon
};

/// Evaluates lane-change desires in strict priority order
/// strategic > regulatory > tactical. Deterministic: no randomness enters the
/// decision. Cooperative maneuvers are not an ego desire; they arise on the
/// receiving side as courtesy braking (see the engine).
inline std::optional<LaneChangeDesire> lane_change_desire(const DesireContext& ctx,
                                                          const LaneChangeParams& lc,
                                                          const DesireTuning& tune = {}) {
  if (ctx.lane_count < 2) return std::nullopt;

  auto lane_ok = [&](int l) {
    return l >= 0 && l < ctx.lane_count && (!ctx.has_next_edge || ctx.permits_next[l]);
  };

  // Strategic: the current lane dead-ends for this vehicle's next turn and the
  // decision point is inside the scaled anticipation horizon. lc_strategic 3.0
  // triggers three times earlier than 1.0.
  if (ctx.has_next_edge && !ctx.permits_next[ctx.lane]) {
    int nearest = -1;
    for (int off = 1; off < ctx.lane_count; ++off) {
      if (lane_ok(ctx.lane - off)) { nearest = ctx.lane - off; break; }
      if (lane_ok(ctx.lane + off)) { nearest = ctx.lane + off; break; }
    }
    if (nearest >= 0) {
      const double horizon =
          lc.strategic * (tune.strategic_time_s * ctx.speed + tune.strategic_base_m);
      if (ctx.dist_to_end < horizon) {
        const int step = nearest > ctx.lane ? ctx.lane + 1 : ctx.lane - 1;
        return LaneChangeDesire{step, LaneChangeReason::strategic};
      }
    }
    return std::nullopt;
  }

  // Regulatory: clear the left lane when keeping right costs less than the
  // scaled threshold.
  if (ctx.lane > 0 && lane_ok(ctx.lane - 1)) {
    const double cost = ctx.anticipated_speed[ctx.lane] - ctx.anticipated_speed[ctx.lane - 1];
    if (cost < tune.dv_keep / lc.keep_right)
      return LaneChangeDesire{ctx.lane - 1, LaneChangeReason::regulatory};
  }

  // Tactical: overtake for speed gain above the scaled threshold. Prefer the
  // larger gain; ties go left.
  int best_lane = -1;
  double best_gain = 0.0;
  for (int l : {ctx.lane + 1, ctx.lane - 1}) {
    if (!lane_ok(l)) continue;
    const double gain = ctx.anticipated_speed[l] - ctx.anticipated_speed[ctx.lane];
    if (best_lane < 0 || gain > best_gain) {
      best_lane = l;
      best_gain = gain;
    }
  }
  if (best_lane >= 0 && best_gain > tune.dv_gain / lc.speed_gain)
    return LaneChangeDesire{best_lane, LaneChangeReason::tactical};

  return std::nullopt;
}

/// State of one neighbor in the destination lane: raw bumper-to-bumper gap to
/// the ego vehicle plus its speed.
struct NeighborGap {
  double gap = 0.0;  // m, >= 0 means no overlap
  double speed = 0.0;
};

/// Gap acceptance for a desired change: both the gap to the prospective new
/// leader and to the prospective new follower must exceed the assertive-scaled
/// required gap. Absent neighbors count as infinite gaps.
inline bool gap_check(double ego_speed, const CarFollowingParams& cf, double lc_assertive,
                      const std::optional<NeighborGap>& leader,
                      const std::optional<NeighborGap>& follower) {
  if (leader && leader->gap < required_gap(ego_speed, leader->speed, cf, lc_assertive))
    return false;
  if (follower && follower->gap < required_gap(follower->speed, ego_speed, cf, lc_assertive))
    return false;
  return true;
}

}  // namespace lanesim
