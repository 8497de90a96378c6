#pragma once

#include <optional>
#include <vector>

#include "sdqn/belief.hpp"
#include "sdqn/dynamics.hpp"
#include "sdqn/world.hpp"

namespace sdqn {

struct ShieldConfig {
  double window_s = 0.5;                    // nominal lookahead
  double virtual_dt = kSimDt;               // virtual timestep
  int virtual_steps = kFutureHorizonSteps;  // 8 steps >= window
  double distance_threshold = 0.5;          // m, footprint-to-point
  double fallback_throttle = -1.0;          // full brake substitution
};

/// Ego trajectory under a held throttle: one state per virtual step
/// (k = 1..virtual_steps). `trained` switches the ego transition to the
/// learned dynamics net; route geometry still supplies the heading.
inline std::vector<EgoState> rollout_ego(const EgoState& ego, double throttle,
                                         const Polyline& route, const ShieldConfig& cfg = {},
                                         const TrainedDynamics* trained = nullptr,
                                         const WorldConfig& wcfg = {}) {
  std::vector<EgoState> out;
  out.reserve(std::size_t(cfg.virtual_steps));
  EgoState cur = ego;
  for (int k = 0; k < cfg.virtual_steps; ++k) {
    if (trained == nullptr) {
      cur = ego_dynamics_step(cur, throttle, route, wcfg);
    } else {
      const auto pred =
          trained->predict(throttle, cur.pos, cur.speed, route.curvature_at(cur.route_s));
      cur.pos = pred.pos;
      cur.speed = std::clamp(pred.speed, 0.0, wcfg.speed_cap);
      cur.route_s += cur.speed * cfg.virtual_dt;
      cur.heading_deg = route.tangent_deg_at(cur.route_s);
      cur.route_index = std::max(cur.route_index, int(route.index_at(cur.route_s)));
    }
    out.push_back(cur);
  }
  return out;
}

/// Straight-line interpolation from `current` to `endpoint` across the
/// window: position at virtual step k is current + (endpoint-current)*k/n.
inline std::vector<Vec2> interpolate_trajectory(Vec2 current, Vec2 endpoint, int steps) {
  std::vector<Vec2> out;
  out.reserve(std::size_t(steps));
  const Vec2 delta = endpoint - current;
  for (int k = 1; k <= steps; ++k)
    out.push_back(current + delta * (double(k) / double(steps)));
  return out;
}

/// Pedestrian trajectories from the future-location model: the model places
/// the endpoint, the anchor is the perceived current position (defaults to
/// the newest noisy sample), and motion is constant-speed along the chord.
inline std::vector<std::vector<Vec2>> rollout_pedestrians(
    const std::vector<ObservationWindow>& windows, const TrainedRegressor& future_model,
    const ShieldConfig& cfg = {}, const std::vector<Vec2>* anchors = nullptr) {
  std::vector<std::vector<Vec2>> out;
  out.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Vec2 current = anchors ? (*anchors)[i] : windows[i].newest().pos;
    const Vec2 endpoint = predict_future(future_model, windows[i]);
    out.push_back(interpolate_trajectory(current, endpoint, cfg.virtual_steps));
  }
  return out;
}

/// Constant-velocity variant (analytic endpoint); the shield's test oracle
/// path.
inline std::vector<std::vector<Vec2>> rollout_pedestrians_cv(
    const std::vector<ObservationWindow>& windows, const ShieldConfig& cfg = {}) {
  std::vector<std::vector<Vec2>> out;
  out.reserve(windows.size());
  for (const ObservationWindow& w : windows)
    out.push_back(
        interpolate_trajectory(w.newest().pos, constant_velocity_predict(w), cfg.virtual_steps));
  return out;
}

struct CollisionPrediction {
  bool collision = false;
  int step = -1;       // virtual step (1-based), first offending
  int pedestrian = -1;  // index into ped_trajs
  double min_distance = std::numeric_limits<double>::infinity();
};

/// True iff some virtual step puts a pedestrian within the threshold of the
/// ego footprint rectangle (stricter than centre-to-centre).
inline CollisionPrediction predicts_collision(const std::vector<EgoState>& ego_traj,
                                              const std::vector<std::vector<Vec2>>& ped_trajs,
                                              const ShieldConfig& cfg = {}) {
  CollisionPrediction res;
  for (const auto& traj : ped_trajs)
    if (traj.size() != ego_traj.size())
      throw StateError("predicts_collision: trajectory length mismatch");
  for (std::size_t k = 0; k < ego_traj.size(); ++k) {
    const OrientedRect fp = ego_traj[k].footprint();
    for (std::size_t p = 0; p < ped_trajs.size(); ++p) {
      const double d = fp.distance_to(ped_trajs[p][k]);
      if (d < res.min_distance) res.min_distance = d;
      if (!res.collision && d < cfg.distance_threshold) {
        res.collision = true;
        res.step = int(k) + 1;
        res.pedestrian = int(p);
      }
    }
  }
  return res;
}

struct ShieldDecision {
  double executed = 0.0;
  bool intervened = false;
  int step = -1;
  int pedestrian = -1;
  double min_distance = std::numeric_limits<double>::infinity();
};

/// Masks the nominated throttle with full brake when the rollout predicts a
/// collision. The substituted action is not re-checked.
inline ShieldDecision filter_action(double nominated, const EgoState& ego,
                                    const Polyline& route,
                                    const std::vector<ObservationWindow>& windows,
                                    const TrainedRegressor& future_model,
                                    const ShieldConfig& cfg = {},
                                    const std::vector<Vec2>* anchors = nullptr,
                                    const TrainedDynamics* dynamics = nullptr,
                                    const WorldConfig& wcfg = {}) {
  const auto ego_traj = rollout_ego(ego, nominated, route, cfg, dynamics, wcfg);
  const auto ped_trajs = rollout_pedestrians(windows, future_model, cfg, anchors);
  const CollisionPrediction pred = predicts_collision(ego_traj, ped_trajs, cfg);
  ShieldDecision d;
  d.min_distance = pred.min_distance;
  d.step = pred.step;
  d.pedestrian = pred.pedestrian;
  d.intervened = pred.collision;
  d.executed = pred.collision ? cfg.fallback_throttle : nominated;
  return d;
}

}  // namespace sdqn
