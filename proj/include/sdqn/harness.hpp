#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <thread>
#include <vector>

#include "sdqn/agent.hpp"
#include "sdqn/belief.hpp"
#include "sdqn/config.hpp"
#include "sdqn/io.hpp"
#include "sdqn/reward.hpp"
#include "sdqn/shield.hpp"

namespace sdqn {

// ---------------------------------------------------------------------------
// Agent variants and wiring
// ---------------------------------------------------------------------------

enum class AgentVariant { kRuleBased, kRl, kBeliefUpdate, kCollisionDetector, kSrl };

inline const char* variant_name(AgentVariant v) {
  switch (v) {
    case AgentVariant::kRuleBased: return "rule-based";
    case AgentVariant::kRl: return "rl";
    case AgentVariant::kBeliefUpdate: return "belief-update";
    case AgentVariant::kCollisionDetector: return "collision-detector";
    case AgentVariant::kSrl: return "srl";
  }
  return "?";
}

inline AgentVariant variant_from_name(const std::string& name) {
  for (AgentVariant v : {AgentVariant::kRuleBased, AgentVariant::kRl,
                         AgentVariant::kBeliefUpdate, AgentVariant::kCollisionDetector,
                         AgentVariant::kSrl})
    if (name == variant_name(v)) return v;
  throw ConfigError("unknown agent variant '" + name + "'");
}

inline bool uses_belief(AgentVariant v) {
  return v == AgentVariant::kBeliefUpdate || v == AgentVariant::kSrl;
}
inline bool uses_shield(AgentVariant v) {
  return v == AgentVariant::kCollisionDetector || v == AgentVariant::kSrl;
}
inline bool uses_qnet(AgentVariant v) { return v != AgentVariant::kRuleBased; }

inline const std::array<AgentVariant, 5>& all_variants() {
  static const std::array<AgentVariant, 5> v = {
      AgentVariant::kRuleBased, AgentVariant::kRl, AgentVariant::kBeliefUpdate,
      AgentVariant::kCollisionDetector, AgentVariant::kSrl};
  return v;
}

// ---------------------------------------------------------------------------
// Episode metrics
// ---------------------------------------------------------------------------

/// Per-episode record. `outcome` is the physical termination cause; the
/// success flag additionally requires a clean speed record, matching the
/// table's success definition.
struct EpisodeMetrics {
  Outcome outcome = Outcome::kTimeout;
  bool speed_violation = false;
  double crossing_time = 0.0;  // seconds; valid when the goal was reached
  double avg_speed = 0.0;
  double min_distance = std::numeric_limits<double>::infinity();
  double avg_distance = 0.0;
  int shield_interventions = 0;
  int steps = 0;
  double episode_return = 0.0;
  double train_loss_mean = 0.0;  // set only under a learner
  std::uint64_t seed = 0;

  bool success() const { return outcome == Outcome::kSuccess && !speed_violation; }
};

struct EvalModels {
  const TrainedRegressor* belief = nullptr;
  const TrainedRegressor* future = nullptr;
  const TrainedDynamics* dynamics = nullptr;  // optional shield dynamics
  const Network* qnet = nullptr;
};

struct EpisodeOptions {
  WorldConfig world;
  RewardParams reward;
  ShieldConfig shield;
  RoiSpec roi;
  bool shield_ground_truth = false;  // feed the shield clean observations
  // Test hook: overrides the policy's action choice (returns an action index).
  std::function<int(const EgoState&, const std::vector<PedestrianView>&)> policy_override;
};

namespace detail {

inline void require_models(AgentVariant v, const EvalModels& m, bool training) {
  if (uses_belief(v) && m.belief == nullptr)
    throw MissingModelError(std::string(variant_name(v)) + ": belief model checkpoint required");
  if (uses_shield(v) && m.future == nullptr)
    throw MissingModelError(std::string(variant_name(v)) +
                            ": future-location model checkpoint required");
  if (!training && uses_qnet(v) && m.qnet == nullptr)
    throw MissingModelError(std::string(variant_name(v)) + ": agent Q-net checkpoint required");
}

inline std::vector<PedestrianView> true_views(const WorldState& w) {
  std::vector<PedestrianView> out;
  out.reserve(w.pedestrians.size());
  for (const Pedestrian& p : w.pedestrians)
    out.push_back({p.id, p.pos, p.speed, p.heading_deg});
  return out;
}

inline int action_index_for_throttle(double throttle) {
  for (std::size_t i = 0; i < kActionThrottles.size(); ++i)
    if (kActionThrottles[i] == throttle) return int(i);
  throw StateError("no action index for throttle " + std::to_string(throttle));
}

inline double nearest_pedestrian_distance(const WorldState& w) {
  double d = std::numeric_limits<double>::infinity();
  for (const Pedestrian& p : w.pedestrians) d = std::min(d, distance(w.ego.pos, p.pos));
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Episode loop (shared by evaluation and training)
// ---------------------------------------------------------------------------

/// Runs one episode through the full pipeline: noise -> belief update ->
/// grid encoding -> policy -> shield -> simulator. Deterministic in the
/// seed. When `learner` is set the loop also stores transitions (with the
/// EXECUTED action) and takes gradient steps on schedule.
inline EpisodeMetrics run_episode(AgentVariant variant,
                                  std::shared_ptr<const IntersectionLayout> layout,
                                  const EvalModels& models, std::uint64_t seed,
                                  const EpisodeOptions& opts, std::string* trace = nullptr,
                                  int episode_index = 0, DqnAgent* learner = nullptr,
                                  double eps = 0.0) {
  const bool policy_external = learner != nullptr || bool(opts.policy_override);
  detail::require_models(variant, models, policy_external);

  WorldState world = reset(layout, derive_seed(seed, 0), opts.world);
  Rng noise_rng = make_rng(derive_seed(seed, 1));
  Rng policy_rng = make_rng(derive_seed(seed, 2));
  Rng learn_rng = make_rng(derive_seed(seed, 3));

  WindowTracker noisy_windows, clean_windows;
  EpisodeMetrics m;
  m.seed = seed;
  double speed_sum = 0.0, dist_sum = 0.0;

  // Pending transition: state seen by the net, executed action, reward;
  // completed once the successor state is encoded.
  bool have_pending = false;
  Tensor pending_state;
  float pending_speed = 0.f;
  int pending_action = 0;
  float pending_reward = 0.f;
  double loss_sum = 0.0;
  int loss_count = 0;

  const Network* qnet = learner ? &learner->online() : models.qnet;

  while (!world.terminal) {
    const NoisyObservation obs = apply_noise(world, noise_rng, opts.world);
    noisy_windows.push(obs.pedestrians);
    if (opts.shield_ground_truth) clean_windows.push(detail::true_views(world));

    // Perceived pedestrians feed the grid (and the TTC baseline).
    std::vector<PedestrianView> perceived;
    if (uses_belief(variant)) {
      perceived = perceive(*models.belief, noisy_windows.windows(obs.pedestrians));
    } else {
      perceived = obs.pedestrians;
    }

    const StateTensor st = encode_state_tensor(perceived, world.ego, opts.roi);
    const Tensor net_input = agent_input(st);
    const float ego_speed = float(world.ego.speed);

    int nominated;
    if (opts.policy_override) {
      nominated = opts.policy_override(world.ego, perceived);
    } else if (variant == AgentVariant::kRuleBased) {
      nominated = detail::action_index_for_throttle(ttc_rule_policy(world.ego, perceived));
    } else if (learner) {
      nominated = learner->select_action(net_input, ego_speed, eps, policy_rng);
    } else {
      Tensor aux({1});
      aux.data[0] = ego_speed / 10.f;
      auto [q, tape] = forward(*qnet, net_input, &aux);
      nominated = select_action_q(q, 0.0, policy_rng);
    }

    ShieldDecision shield_decision;
    shield_decision.executed = kActionThrottles[std::size_t(nominated)];
    if (uses_shield(variant)) {
      std::vector<ObservationWindow> windows;
      std::vector<Vec2> anchors;
      if (opts.shield_ground_truth) {
        const auto views = detail::true_views(world);
        windows = clean_windows.windows(views);
        for (const auto& v : views) anchors.push_back(v.pos);
      } else {
        windows = noisy_windows.windows(obs.pedestrians);
        // The interpolation anchor is the variant's perceived position.
        for (const auto& p : perceived) anchors.push_back(p.pos);
      }
      shield_decision =
          filter_action(kActionThrottles[std::size_t(nominated)], world.ego,
                        layout->ego_route, windows, *models.future, opts.shield, &anchors,
                        models.dynamics, opts.world);
    }
    const int executed = detail::action_index_for_throttle(shield_decision.executed);

    auto [next_world, events] = step(world, shield_decision.executed, opts.world);
    const RewardResult rr = compute_reward(world, next_world, events, opts.reward);

    // Learner bookkeeping: finish the previous transition, stage this one.
    if (learner) {
      if (have_pending) {
        Transition t;
        t.state = std::move(pending_state);
        t.ego_speed = pending_speed;
        t.action = pending_action;
        t.reward = pending_reward;
        t.next_state = net_input;
        t.next_ego_speed = ego_speed;
        t.terminal = false;
        learner->observe(std::move(t));
        if (learner->ready_to_learn() &&
            learner->env_steps() % learner->config().train_every == 0) {
          const auto stats = learner->train_step(learn_rng);
          loss_sum += stats.loss;
          ++loss_count;
        }
      }
      pending_state = net_input;
      pending_speed = ego_speed;
      pending_action = executed;  // replay stores what actually ran
      pending_reward = float(rr.reward);
      have_pending = true;
    }

    // Trace + metrics.
    ++m.steps;
    m.episode_return += rr.reward;
    speed_sum += next_world.ego.speed;
    const double near = detail::nearest_pedestrian_distance(next_world);
    dist_sum += std::isfinite(near) ? near : 0.0;
    m.min_distance = std::min(m.min_distance, near);
    m.speed_violation = m.speed_violation || events.speed_violation;
    m.shield_interventions += shield_decision.intervened ? 1 : 0;
    if (trace) {
      JsonLine line;
      line.field("type", std::string("step"))
          .field("episode", episode_index)
          .field("step", m.steps)
          .field("t", next_world.time())
          .field("ego_x", next_world.ego.pos.x)
          .field("ego_y", next_world.ego.pos.y)
          .field("ego_speed", next_world.ego.speed)
          .field("ego_heading", next_world.ego.heading_deg)
          .field("action_nominated", nominated)
          .field("action_executed", executed)
          .field("intervened", shield_decision.intervened);
      if (shield_decision.intervened) {
        line.field("shield_step", shield_decision.step)
            .field("shield_ped", shield_decision.pedestrian)
            .field("shield_min_distance", shield_decision.min_distance);
      }
      line.field("reward", rr.reward)
          .field("min_ped_distance", near)
          .raw("peds", json_ped_array(next_world.pedestrians));
      *trace += line.str() + "\n";
    }

    if (rr.terminal) {
      m.outcome = rr.outcome;
      if (rr.outcome == Outcome::kSuccess) m.crossing_time = next_world.time();
      if (learner && have_pending) {
        // Terminal transition: the successor state is irrelevant to the
        // target but still encoded for completeness.
        const NoisyObservation final_obs = apply_noise(next_world, noise_rng, opts.world);
        noisy_windows.push(final_obs.pedestrians);
        std::vector<PedestrianView> final_perceived =
            uses_belief(variant)
                ? perceive(*models.belief, noisy_windows.windows(final_obs.pedestrians))
                : final_obs.pedestrians;
        const StateTensor fst = encode_state_tensor(final_perceived, next_world.ego, opts.roi);
        Transition t;
        t.state = std::move(pending_state);
        t.ego_speed = pending_speed;
        t.action = pending_action;
        t.reward = pending_reward;
        t.next_state = agent_input(fst);
        t.next_ego_speed = float(next_world.ego.speed);
        t.terminal = true;
        learner->observe(std::move(t));
        if (learner->ready_to_learn() &&
            learner->env_steps() % learner->config().train_every == 0) {
          const auto stats = learner->train_step(learn_rng);
          loss_sum += stats.loss;
          ++loss_count;
        }
        have_pending = false;
      }
    }
    world = std::move(next_world);
  }

  m.avg_speed = m.steps > 0 ? speed_sum / m.steps : 0.0;
  m.avg_distance = m.steps > 0 ? dist_sum / m.steps : 0.0;
  if (!std::isfinite(m.min_distance)) m.min_distance = 0.0;
  m.train_loss_mean = loss_count > 0 ? loss_sum / loss_count : 0.0;
  if (learner) learner->end_episode(m.steps);

  if (trace) {
    JsonLine line;
    line.field("type", std::string("episode_end"))
        .field("episode", episode_index)
        .field("outcome", std::string(outcome_name(m.outcome)))
        .field("speed_violation", m.speed_violation)
        .field("success", m.success())
        .field("crossing_time", m.crossing_time)
        .field("avg_speed", m.avg_speed)
        .field("min_distance", m.min_distance)
        .field("avg_distance", m.avg_distance)
        .field("interventions", m.shield_interventions)
        .field("steps", m.steps)
        .field("return", m.episode_return)
        .field("seed", m.seed);
    *trace += line.str() + "\n";
  }
  return m;
}

// ---------------------------------------------------------------------------
// Experiments (evaluation over many episodes)
// ---------------------------------------------------------------------------

/// Aggregate row mirroring the comparison table's column order.
struct TableRow {
  std::string variant;
  double success_pct = 0.0;
  double collision_pct = 0.0;
  double timeout_pct = 0.0;
  double violation_pct = 0.0;
  double avg_crossing_time = 0.0;  // over goal-reaching episodes
  double avg_speed = 0.0;
  double avg_distance = 0.0;
  double avg_interventions = 0.0;
  int episodes = 0;
};

inline TableRow aggregate_metrics(const std::string& variant,
                                  const std::vector<EpisodeMetrics>& eps) {
  TableRow row;
  row.variant = variant;
  row.episodes = int(eps.size());
  if (eps.empty()) return row;
  int crossings = 0;
  for (const EpisodeMetrics& m : eps) {
    row.success_pct += m.success() ? 1.0 : 0.0;
    row.collision_pct += m.outcome == Outcome::kCollision ? 1.0 : 0.0;
    row.timeout_pct += m.outcome == Outcome::kTimeout ? 1.0 : 0.0;
    row.violation_pct += m.speed_violation ? 1.0 : 0.0;
    if (m.outcome == Outcome::kSuccess) {
      row.avg_crossing_time += m.crossing_time;
      ++crossings;
    }
    row.avg_speed += m.avg_speed;
    row.avg_distance += m.avg_distance;
    row.avg_interventions += m.shield_interventions;
  }
  const double n = double(eps.size());
  row.success_pct *= 100.0 / n;
  row.collision_pct *= 100.0 / n;
  row.timeout_pct *= 100.0 / n;
  row.violation_pct *= 100.0 / n;
  row.avg_crossing_time = crossings > 0 ? row.avg_crossing_time / crossings : 0.0;
  row.avg_speed /= n;
  row.avg_distance /= n;
  row.avg_interventions /= n;
  return row;
}

inline std::string metrics_csv_header() {
  return csv_join({"variant", "episodes", "success_pct", "collision_pct", "timeout_pct",
                   "speed_violation_pct", "avg_crossing_time_s", "avg_speed_mps",
                   "avg_distance_m", "avg_shield_interventions"});
}

inline std::string metrics_csv_row(const TableRow& r) {
  return csv_join({r.variant, num_str(r.episodes), num_str(r.success_pct),
                   num_str(r.collision_pct), num_str(r.timeout_pct), num_str(r.violation_pct),
                   num_str(r.avg_crossing_time), num_str(r.avg_speed), num_str(r.avg_distance),
                   num_str(r.avg_interventions)});
}

struct ExperimentResult {
  std::vector<EpisodeMetrics> episodes;
  TableRow row;
  std::string jsonl;  // per-episode traces in index order
};

/// Evaluates one variant for `episodes` runs with per-episode derived seeds.
/// Episodes fan out across worker threads; results join by index, so the
/// output is identical whatever the thread count.
inline ExperimentResult run_experiment(AgentVariant variant,
                                       std::shared_ptr<const IntersectionLayout> layout,
                                       const EvalModels& models, int episodes,
                                       std::uint64_t base_seed, const EpisodeOptions& opts,
                                       bool want_traces = true, int workers = 0) {
  detail::require_models(variant, models, false);
  ExperimentResult res;
  const std::size_t n_eps = std::size_t(episodes);
  res.episodes.resize(n_eps);
  std::vector<std::string> traces(n_eps);

  if (workers <= 0) workers = int(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, episodes));
  std::atomic<int> next{0};
  const auto worker = [&] {
    for (int i = next.fetch_add(1); i < episodes; i = next.fetch_add(1)) {
      const std::uint64_t seed = derive_seed(base_seed, std::uint64_t(i) + 1000);
      res.episodes[std::size_t(i)] =
          run_episode(variant, layout, models, seed, opts,
                      want_traces ? &traces[std::size_t(i)] : nullptr, i);
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (const std::string& t : traces) res.jsonl += t;
  res.row = aggregate_metrics(variant_name(variant), res.episodes);
  return res;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainEpisodeLog {
  int episode = 0;
  int steps = 0;
  double episode_return = 0.0;
  double epsilon = 0.0;
  double beta = 0.0;
  double loss_mean = 0.0;
  int interventions = 0;
  Outcome outcome = Outcome::kTimeout;
};

struct TrainResult {
  Network qnet;
  std::vector<TrainEpisodeLog> log;
};

inline std::string train_log_csv(const std::vector<TrainEpisodeLog>& log) {
  std::string out = csv_join(
      {"episode", "steps", "return", "epsilon", "beta", "loss_mean", "interventions",
       "outcome"});
  for (const auto& r : log)
    out += csv_join({num_str(r.episode), num_str(r.steps), num_str(r.episode_return),
                     num_str(r.epsilon), num_str(r.beta), num_str(r.loss_mean),
                     num_str(r.interventions), outcome_name(r.outcome)});
  return out;
}

/// DDQN/PER training with the variant's own wiring active in the loop (the
/// shield filters nominations during training too; replay stores executed
/// actions). Checkpoints land in `checkpoint_dir` every 25 episodes when the
/// directory is non-empty.
inline TrainResult train_variant(AgentVariant variant,
                                 std::shared_ptr<const IntersectionLayout> layout,
                                 const EvalModels& models, const AgentConfig& agent_cfg,
                                 std::uint64_t base_seed, const EpisodeOptions& opts_in,
                                 const std::string& checkpoint_dir = "",
                                 std::function<void(const TrainEpisodeLog&)> on_episode = {}) {
  if (!uses_qnet(variant))
    throw ConfigError("train: the rule-based agent has nothing to train");
  detail::require_models(variant, models, true);

  DqnAgent learner(agent_cfg, derive_seed(base_seed, 99));
  EpisodeOptions opts = opts_in;
  opts.roi = agent_cfg.roi();

  TrainResult result;
  for (int ep = 0; ep < agent_cfg.episodes; ++ep) {
    const double eps = epsilon_schedule(ep, agent_cfg);
    const std::uint64_t seed = derive_seed(base_seed, std::uint64_t(ep));
    const long steps_before = learner.env_steps();
    const EpisodeMetrics m =
        run_episode(variant, layout, models, seed, opts, nullptr, ep, &learner, eps);

    TrainEpisodeLog row;
    row.episode = ep;
    row.steps = m.steps;
    row.episode_return = m.episode_return;
    row.epsilon = eps;
    row.beta = learner.beta();
    row.loss_mean = m.train_loss_mean;
    row.interventions = m.shield_interventions;
    row.outcome = m.outcome;
    (void)steps_before;
    result.log.push_back(row);
    if (on_episode) on_episode(row);

    if (!checkpoint_dir.empty() && (ep + 1) % 25 == 0) {
      save_network(checkpoint_dir + "/agent_" + variant_name(variant) + "_ep" +
                       std::to_string(ep + 1) + ".sdqn",
                   learner.online());
    }
  }
  result.qnet = learner.online();
  return result;
}

}  // namespace sdqn
