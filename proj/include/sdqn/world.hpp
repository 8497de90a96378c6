#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "sdqn/common.hpp"
#include "sdqn/geom.hpp"
#include "sdqn/layout.hpp"

namespace sdqn {

inline constexpr double kSimDt = 1.0 / 15.0;  // 15 FPS synchronous stepping
inline constexpr int kStepsPerSecond = 15;

struct WorldConfig {
  // Observation noise (std devs); zero means ground-truth observations.
  double sigma_pos = 1.0;
  double sigma_vel = 0.2;
  double sigma_heading = 10.0;

  // Pedestrian population.
  int spawn_min = 5, spawn_max = 30;
  double spawn_interval_s = 10.0;
  int spawn_batch = 5;
  double ped_speed_min = 0.2, ped_speed_max = 1.8;
  double ped_radius = 0.3;        // collision disc
  double block_inflation = 0.6;   // walkers refuse to enter the ego footprint + this
  int block_retarget_steps = 30;  // blocked this long -> pick a new destination
  double min_leg_length = 8.0;

  // Ego dynamics.
  double accel_drive = 3.5;  // m/s^2 per unit throttle >= 0
  double accel_brake = 8.0;  // m/s^2 per unit throttle < 0
  double speed_cap = 12.0;   // physical cap, above the 10 m/s legal limit
  double speed_limit = 10.0;

  double time_limit_s = 45.0;
};

struct EgoState {
  static constexpr double kLength = 4.5;
  static constexpr double kWidth = 2.0;

  Vec2 pos;
  double heading_deg = 0.0;  // polyline tangent, direction of travel
  double speed = 0.0;
  double route_s = 0.0;  // arclength progress along the route
  int route_index = 0;   // last waypoint passed, monotone within an episode

  OrientedRect footprint() const { return {pos, heading_deg, kLength, kWidth}; }
};

struct Pedestrian {
  int id = 0;
  Vec2 pos;
  double speed = 0.0;        // m/s, constant between retargets
  double heading_deg = 0.0;  // points along the current leg
  Vec2 destination;
  int blocked_steps = 0;

  Vec2 velocity() const { return heading_vec(heading_deg) * speed; }
};

struct WorldState {
  int step_index = 0;
  EgoState ego;
  std::vector<Pedestrian> pedestrians;
  std::shared_ptr<const IntersectionLayout> layout;
  Rng rng;
  int next_ped_id = 0;
  bool terminal = false;

  double time() const { return double(step_index) * kSimDt; }
};

struct WorldEvents {
  bool collision = false;
  int collision_ped_id = -1;
  bool goal = false;
  bool timeout = false;
  bool speed_violation = false;

  bool terminal() const { return collision || goal || timeout; }
};

struct PedestrianView {
  int id = 0;
  Vec2 pos;
  double speed = 0.0;
  double heading_deg = 0.0;
};

/// Ego state passes through unperturbed; pedestrian fields carry independent
/// zero-mean Gaussian noise.
struct NoisyObservation {
  EgoState ego;
  std::vector<PedestrianView> pedestrians;
};

// ---------------------------------------------------------------------------
// Ego dynamics: throttle-only control on a path-locked route. Braking is
// stronger than drive and clamps at zero (no reverse gear).
// ---------------------------------------------------------------------------

inline EgoState ego_dynamics_step(const EgoState& ego, double throttle,
                                  const Polyline& route, const WorldConfig& cfg = {}) {
  const double a = throttle >= 0.0 ? cfg.accel_drive * throttle : cfg.accel_brake * throttle;
  EgoState out = ego;
  out.speed = std::clamp(ego.speed + a * kSimDt, 0.0, cfg.speed_cap);
  out.route_s = ego.route_s + out.speed * kSimDt;
  out.pos = route.point_at(out.route_s);
  out.heading_deg = route.tangent_deg_at(out.route_s);
  out.route_index = std::max(ego.route_index, int(route.index_at(out.route_s)));
  return out;
}

namespace detail {

inline void retarget(Pedestrian& p, const IntersectionLayout& layout, Rng& rng,
                     const WorldConfig& cfg) {
  std::uniform_int_distribution<std::size_t> pick(0, layout.crosswalks.size() - 1);
  std::uniform_real_distribution<double> along(0.0, 1.0);
  Vec2 dest = p.pos;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const Crosswalk& cw = layout.crosswalks[pick(rng)];
    std::uniform_real_distribution<double> lat(-cw.width / 2.0, cw.width / 2.0);
    dest = cw.point(along(rng), lat(rng));
    if (distance(dest, p.pos) >= cfg.min_leg_length) break;
  }
  p.destination = dest;
  std::uniform_real_distribution<double> spd(cfg.ped_speed_min, cfg.ped_speed_max);
  p.speed = spd(rng);
  const Vec2 d = dest - p.pos;
  p.heading_deg = wrap_deg_360(rad_to_deg(std::atan2(d.y, d.x)));
}

inline Pedestrian spawn_pedestrian(const IntersectionLayout& layout, Rng& rng,
                                   const WorldConfig& cfg, int id) {
  Pedestrian p;
  p.id = id;
  std::uniform_int_distribution<std::size_t> pick(0, layout.crosswalks.size() - 1);
  const Crosswalk& cw = layout.crosswalks[pick(rng)];
  std::uniform_real_distribution<double> along(0.0, 1.0);
  std::uniform_real_distribution<double> lat(-cw.width / 2.0, cw.width / 2.0);
  p.pos = cw.point(along(rng), lat(rng));
  retarget(p, layout, rng, cfg);
  return p;
}

/// One walking tick: straight toward the destination, retarget on arrival.
/// `blocked_zone` (if any) is the inflated ego footprint walkers refuse to
/// enter; a walker stuck at it long enough reroutes.
inline void advance_pedestrian(Pedestrian& p, const IntersectionLayout& layout, Rng& rng,
                               const WorldConfig& cfg, const OrientedRect* blocked_zone) {
  const double step_len = p.speed * kSimDt;
  if (distance(p.pos, p.destination) <= step_len) {
    p.pos = p.destination;
    retarget(p, layout, rng, cfg);
    p.blocked_steps = 0;
    return;
  }
  const Vec2 next = p.pos + (p.destination - p.pos).normalized() * step_len;
  if (blocked_zone != nullptr && blocked_zone->contains(next)) {
    if (++p.blocked_steps >= cfg.block_retarget_steps) {
      // Reroute away from the vehicle; keep waiting if every draw is blocked.
      for (int attempt = 0; attempt < 5; ++attempt) {
        retarget(p, layout, rng, cfg);
        const Vec2 probe = p.pos + (p.destination - p.pos).normalized() * step_len;
        if (!blocked_zone->contains(probe)) break;
      }
      p.blocked_steps = 0;
    }
  } else {
    p.pos = next;
    p.blocked_steps = 0;
  }
}

}  // namespace detail

/// Fresh episode: ego parked at the route start, 5..30 walkers on crosswalks.
/// Identical (layout, seed) pairs produce identical worlds.
inline WorldState reset(std::shared_ptr<const IntersectionLayout> layout, std::uint64_t seed,
                        const WorldConfig& cfg = {}) {
  WorldState w;
  w.layout = std::move(layout);
  w.rng = make_rng(seed);
  w.ego.route_s = 0.0;
  w.ego.speed = 0.0;
  w.ego.pos = w.layout->ego_route.points().front();
  w.ego.heading_deg = w.layout->ego_route.tangent_deg_at(0.0);
  w.ego.route_index = 0;
  std::uniform_int_distribution<int> count(cfg.spawn_min, cfg.spawn_max);
  const int n = count(w.rng);
  for (int i = 0; i < n; ++i)
    w.pedestrians.push_back(detail::spawn_pedestrian(*w.layout, w.rng, cfg, w.next_ped_id++));
  return w;
}

/// Advances one 1/15 s tick. Walkers head straight for their destinations,
/// retarget on arrival, and refuse to walk into the (inflated) ego footprint;
/// a walker blocked for ~2 s reroutes. Five new walkers appear at every
/// multiple of the spawn interval.
inline std::pair<WorldState, WorldEvents> step(const WorldState& world, double throttle,
                                               const WorldConfig& cfg = {}) {
  if (world.terminal) throw StateError("step: world is terminal; call reset");
  throttle = std::clamp(throttle, -1.0, 1.0);

  WorldState w = world;
  w.step_index = world.step_index + 1;
  w.ego = ego_dynamics_step(world.ego, throttle, world.layout->ego_route, cfg);

  const OrientedRect blocked_zone{w.ego.pos, w.ego.heading_deg,
                                  EgoState::kLength + 2 * cfg.block_inflation,
                                  EgoState::kWidth + 2 * cfg.block_inflation};
  for (Pedestrian& p : w.pedestrians)
    detail::advance_pedestrian(p, *w.layout, w.rng, cfg, &blocked_zone);

  const int interval_steps = int(cfg.spawn_interval_s * kStepsPerSecond);
  if (interval_steps > 0 && w.step_index % interval_steps == 0)
    for (int i = 0; i < cfg.spawn_batch; ++i)
      w.pedestrians.push_back(detail::spawn_pedestrian(*w.layout, w.rng, cfg, w.next_ped_id++));

  WorldEvents ev;
  const OrientedRect fp = w.ego.footprint();
  for (const Pedestrian& p : w.pedestrians) {
    if (fp.distance_to(p.pos) <= cfg.ped_radius) {
      ev.collision = true;
      ev.collision_ped_id = p.id;
      break;
    }
  }
  ev.goal = w.ego.route_index == int(IntersectionLayout::kRouteWaypoints) - 1;
  ev.timeout = w.time() >= cfg.time_limit_s;
  ev.speed_violation = w.ego.speed > cfg.speed_limit;
  w.terminal = ev.terminal();
  return {std::move(w), ev};
}

/// Gaussian perturbation of every pedestrian's position, speed and heading;
/// the ego state is reported exactly.
inline NoisyObservation apply_noise(const WorldState& world, Rng& rng,
                                    const WorldConfig& cfg = {}) {
  NoisyObservation obs;
  obs.ego = world.ego;
  std::normal_distribution<double> npos(0.0, cfg.sigma_pos);
  std::normal_distribution<double> nvel(0.0, cfg.sigma_vel);
  std::normal_distribution<double> nhead(0.0, cfg.sigma_heading);
  obs.pedestrians.reserve(world.pedestrians.size());
  for (const Pedestrian& p : world.pedestrians) {
    PedestrianView n;
    n.id = p.id;
    n.pos = {p.pos.x + (cfg.sigma_pos > 0 ? npos(rng) : 0.0),
             p.pos.y + (cfg.sigma_pos > 0 ? npos(rng) : 0.0)};
    n.speed = p.speed + (cfg.sigma_vel > 0 ? nvel(rng) : 0.0);
    n.heading_deg = wrap_deg_360(p.heading_deg + (cfg.sigma_heading > 0 ? nhead(rng) : 0.0));
    obs.pedestrians.push_back(n);
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Time-to-collision rule policy (the hand-engineered baseline)
// ---------------------------------------------------------------------------

struct TtcPolicyConfig {
  double hard_brake_ttc = 2.0;  // below this: full brake
  double soft_brake_ttc = 4.0;  // below this: decelerate
  double hit_radius = 1.0;      // closest approach inside this counts as a conflict
  double cruise_speed = 9.0;    // hold <= 0.9 * speed limit
};

/// Constant-velocity time to collision against each pedestrian; brakes hard
/// under 2 s, eases under 4 s, otherwise accelerates while holding the cruise
/// speed. Returns one of the four action throttles.
inline double ttc_rule_policy(const EgoState& ego, const std::vector<PedestrianView>& peds,
                              const TtcPolicyConfig& cfg = {}) {
  double min_ttc = std::numeric_limits<double>::infinity();
  const Vec2 ego_vel = heading_vec(ego.heading_deg) * ego.speed;
  for (const auto& p : peds) {
    const Vec2 r = p.pos - ego.pos;
    const Vec2 u = heading_vec(p.heading_deg) * p.speed - ego_vel;
    if (r.norm() <= cfg.hit_radius) {
      min_ttc = 0.0;
      break;
    }
    const double uu = u.dot(u);
    if (uu <= 1e-12) continue;  // no relative motion
    const double t_star = -r.dot(u) / uu;
    if (t_star <= 0.0) continue;  // diverging
    const double d_min = (r + u * t_star).norm();
    if (d_min <= cfg.hit_radius) min_ttc = std::min(min_ttc, t_star);
  }
  if (min_ttc < cfg.hard_brake_ttc) return -1.0;
  if (min_ttc < cfg.soft_brake_ttc) return -0.4;
  // Full throttle, capped so the next-step speed stays at cruise.
  WorldConfig wc;
  if (ego.speed >= cfg.cruise_speed) return -0.4;
  if (ego.speed + wc.accel_drive * kSimDt > cfg.cruise_speed) return 0.2;
  return 1.0;
}

}  // namespace sdqn
