#pragma once

#include <algorithm>
#include <limits>

#include "sdqn/world.hpp"

namespace sdqn {

struct RewardParams {
  double d1 = 7.0;   // m, near/far switching distance
  double d2 = 25.0;  // m, goal-proximity shaping radius
  double d3 = 1.0;   // m, proximity penalty saturation
  double d4 = 2.0;   // m, doubled-penalty distance
  double v1 = 1.5;   // m/s, crawling threshold
  double v2 = 10.0;  // m/s, speed limit
  double r1 = 0.005;
  double r2 = 0.005;
  double r3 = -0.25;
  double r4 = 0.2;
  double r5 = -0.5;
  double r6 = 1.5;
  double r7 = -0.25;
};

enum class Outcome { kNone, kSuccess, kCollision, kTimeout };

inline const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kNone: return "none";
    case Outcome::kSuccess: return "success";
    case Outcome::kCollision: return "collision";
    case Outcome::kTimeout: return "timeout";
  }
  return "?";
}

struct RewardResult {
  double reward = 0.0;
  bool terminal = false;
  Outcome outcome = Outcome::kNone;
  double bumper_distance = std::numeric_limits<double>::infinity();
};

/// min(d_right, d_left): nearest pedestrian distance from the two front
/// bumper corners.
inline double bumper_distance(const EgoState& ego, const std::vector<Pedestrian>& peds) {
  const Vec2 fwd = heading_vec(ego.heading_deg);
  const Vec2 left = Vec2{-fwd.y, fwd.x};
  const Vec2 front_l = ego.pos + fwd * (EgoState::kLength / 2) + left * (EgoState::kWidth / 2);
  const Vec2 front_r = ego.pos + fwd * (EgoState::kLength / 2) - left * (EgoState::kWidth / 2);
  double d = std::numeric_limits<double>::infinity();
  for (const Pedestrian& p : peds)
    d = std::min({d, distance(front_l, p.pos), distance(front_r, p.pos)});
  return d;
}

/// Conditional reward. Far from pedestrians (d > d1) the agent is paid for
/// progress and speed and penalized for crawling or speeding; near one
/// (d <= d1) it pays a proximity penalty that ramps from 0 at d1 to r3 at d3
/// and doubles inside d4. Collision and goal override with -/+ r6.
inline RewardResult compute_reward(const WorldState& before, const WorldState& after,
                                   const WorldEvents& events, const RewardParams& p = {}) {
  RewardResult res;
  const double total = after.layout->ego_route.total_length();
  const double x_t = std::max(0.0, total - after.ego.route_s);
  const double v = after.ego.speed;
  const double d = bumper_distance(after.ego, after.pedestrians);
  res.bumper_distance = d;

  if (d > p.d1) {
    const double progress = after.ego.route_s - before.ego.route_s;
    const double progress_norm = std::clamp(progress / (p.v2 * kSimDt), -1.0, 1.0);
    res.reward = p.r1 * progress_norm + p.r2 * std::min(v, p.v2) / p.v2;
    if (x_t < p.d2) res.reward += p.r4 * (p.d2 - x_t) / p.d2;
    if (v < p.v1) res.reward += p.r7;
    if (v > p.v2) res.reward += p.r5;
  } else {
    res.reward = p.r3 * (p.d1 - std::max(d, p.d3)) / (p.d1 - p.d3);
    if (d <= p.d4) res.reward *= 2.0;
  }

  if (events.collision) {
    res.reward = -p.r6;
    res.terminal = true;
    res.outcome = Outcome::kCollision;
  } else if (events.goal) {
    res.reward += p.r6;
    res.terminal = true;
    res.outcome = Outcome::kSuccess;
  } else if (events.timeout) {
    res.terminal = true;
    res.outcome = Outcome::kTimeout;
  }
  return res;
}

}  // namespace sdqn
