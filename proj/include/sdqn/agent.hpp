#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "sdqn/encoder.hpp"
#include "sdqn/optim.hpp"
#include "sdqn/replay.hpp"

namespace sdqn {

/// Throttle values behind the four discrete actions: full brake, decelerate,
/// accelerate_1, accelerate_2.
inline constexpr std::array<double, 4> kActionThrottles = {-1.0, -0.4, 0.2, 1.0};
inline constexpr std::size_t kNumActions = 4;

struct AgentConfig {
  double gamma = 0.95;
  double lr = 0.00025;  // RMSprop
  std::size_t batch = 32;
  std::size_t learn_start = 750;
  long target_update_every = 5000;  // agent steps
  double eps0 = 1.0, eps_min = 0.05, eps_decay = 0.99;  // decayed per episode
  double alpha = 0.6;
  double beta0 = 0.4;  // annealed linearly to 1 across the expected run
  int episodes = 500;
  std::size_t buffer_capacity = 10000;
  int train_every = 1;  // gradient step per this many env steps

  // Architecture; the desk profile shrinks grid and filters for CI-scale runs.
  std::size_t grid_rows = 80, grid_cols = 60;
  std::size_t conv_filters = 64;
  int conv_stages = 3;
  std::vector<std::size_t> dense_units = {512, 256, 64};
  bool final_relu = false;  // literal Table-IV ReLU on the Q head, off by default

  static AgentConfig full() { return {}; }

  static AgentConfig desk() {
    AgentConfig c;
    c.grid_rows = 40;
    c.grid_cols = 30;
    c.conv_filters = 16;
    c.conv_stages = 2;  // a third 5x5/3 pool does not fit the 40x30 grid
    c.episodes = 150;
    c.eps_decay = 0.97;
    c.train_every = 3;
    return c;
  }

  RoiSpec roi() const {
    RoiSpec r;
    r.cell_l = r.length / double(grid_rows);
    r.cell_w = r.width / double(grid_cols);
    return r;
  }
};

/// Conv/pool feature stack, flatten, speed concat, four dense layers.
inline Network make_q_net(const AgentConfig& cfg, std::uint64_t seed) {
  NetBuilder b({3, cfg.grid_rows, cfg.grid_cols}, 1);
  for (int i = 0; i < cfg.conv_stages; ++i)
    b.conv2d(cfg.conv_filters).relu().avgpool2d(5, 5, 3, 3);
  b.flatten().concat_aux();
  for (std::size_t units : cfg.dense_units) b.dense(units).relu();
  b.dense(kNumActions);
  if (cfg.final_relu) b.relu();
  return b.build(seed);
}

/// Network input scaling: occupancy codes pass through, relative speed is
/// scaled by the speed limit and relative heading by 180.
inline Tensor agent_input(const StateTensor& st) {
  Tensor in = st.grid;
  const std::size_t plane = st.rows * st.cols;
  for (std::size_t i = 0; i < plane; ++i) in.data[plane + i] /= 10.f;
  for (std::size_t i = 0; i < plane; ++i) in.data[2 * plane + i] /= 180.f;
  return in;
}

// ---------------------------------------------------------------------------
// Target values
// ---------------------------------------------------------------------------

inline double dqn_target(double reward, const Tensor& q_next_online, bool terminal,
                         double gamma) {
  if (terminal) return reward;
  return reward + gamma * double(q_next_online.data[argmax(q_next_online)]);
}

/// The online net picks the bootstrap action, the target net scores it.
inline double ddqn_target(double reward, const Tensor& q_next_online,
                          const Tensor& q_next_target, bool terminal, double gamma) {
  if (terminal) return reward;
  return reward + gamma * double(q_next_target.data[argmax(q_next_online)]);
}

/// delta = y_ddqn - Q_online(s, a). Priorities derive from |delta| + 1e-5.
inline double td_error(double reward, bool terminal, const Tensor& q_next_online,
                       const Tensor& q_next_target, const Tensor& q_state, int action,
                       double gamma) {
  return ddqn_target(reward, q_next_online, q_next_target, terminal, gamma) -
         double(q_state.data[std::size_t(action)]);
}

inline double epsilon_schedule(int episode, const AgentConfig& cfg = {}) {
  return std::max(cfg.eps_min, cfg.eps0 * std::pow(cfg.eps_decay, double(episode)));
}

/// Epsilon-greedy over a Q row; greedy ties break toward the lowest index.
inline int select_action_q(const Tensor& q, double eps, Rng& rng) {
  if (eps > 0.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < eps) {
      std::uniform_int_distribution<int> pick(0, int(kNumActions) - 1);
      return pick(rng);
    }
  }
  return int(argmax(q));
}

// ---------------------------------------------------------------------------
// DDQN/PER learner
// ---------------------------------------------------------------------------

struct TrainStepStats {
  bool trained = false;
  double loss = 0.0;
  double beta = 0.0;
  bool target_synced = false;
};

class DqnAgent {
 public:
  DqnAgent(AgentConfig cfg, std::uint64_t seed)
      : cfg_(std::move(cfg)),
        online_(make_q_net(cfg_, seed)),
        target_(online_),
        buffer_(cfg_.buffer_capacity, cfg_.alpha),
        beta_(cfg_.beta0) {}

  const AgentConfig& config() const { return cfg_; }
  Network& online() { return online_; }
  const Network& online() const { return online_; }
  const Network& target() const { return target_; }
  SumTreeBuffer& buffer() { return buffer_; }
  long env_steps() const { return env_steps_; }
  double beta() const { return beta_; }

  Tensor q_values(const Tensor& state, float ego_speed) const {
    Tensor aux({1});
    aux.data[0] = ego_speed / 10.f;
    auto [q, tape] = forward(online_, state, &aux);
    return q;
  }

  int select_action(const Tensor& state, float ego_speed, double eps, Rng& rng) const {
    if (eps >= 1.0) {  // skip the forward pass when the draw is forced random
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (unit(rng) < eps) {
        std::uniform_int_distribution<int> pick(0, int(kNumActions) - 1);
        return pick(rng);
      }
    }
    return select_action_q(q_values(state, ego_speed), eps, rng);
  }

  /// Records one environment step: stores the transition at max priority and
  /// syncs the target net on schedule.
  bool observe(Transition t) {
    buffer_.push(std::move(t));
    ++env_steps_;
    if (env_steps_ % cfg_.target_update_every == 0) {
      sync_target();
      return true;
    }
    return false;
  }

  void end_episode(int episode_steps) {
    ++episodes_done_;
    total_episode_steps_ += episode_steps;
  }

  bool ready_to_learn() const { return buffer_.size() >= cfg_.learn_start; }

  /// One PER-weighted DDQN gradient step on a 32-sample batch; updates the
  /// sampled priorities to |delta| + epsilon and advances beta.
  TrainStepStats train_step(Rng& rng) {
    TrainStepStats stats;
    const auto sample = buffer_.sample(cfg_.batch, rng, cfg_.learn_start);
    const auto is_weights = importance_weights(sample.probs, buffer_.size(), beta_);

    GradMapT<float> acc;
    for (const auto& [k, v] : online_.weights) acc.emplace(k, Tensor(v.shape));
    double loss = 0.0;
    for (std::size_t j = 0; j < sample.indices.size(); ++j) {
      const Transition& t = buffer_.at(sample.indices[j]);
      Tensor aux({1}), next_aux({1});
      aux.data[0] = t.ego_speed / 10.f;
      next_aux.data[0] = t.next_ego_speed / 10.f;

      double y = t.reward;
      if (!t.terminal) {
        auto [q_next_online, tape_a] = forward(online_, t.next_state, &next_aux);
        auto [q_next_target, tape_b] = forward(target_, t.next_state, &next_aux);
        y = ddqn_target(t.reward, q_next_online, q_next_target, false, cfg_.gamma);
      }
      auto [q, tape] = forward(online_, t.state, &aux);
      const double delta = y - double(q.data[t.action]);
      buffer_.update_priority(sample.indices[j], delta);

      const double w = is_weights[j];
      loss += w * delta * delta;
      Tensor dout(q.shape);
      dout.data[std::size_t(t.action)] =
          float(2.0 * w * -delta / double(sample.indices.size()));
      GradMapT<float> g = backward(online_, tape, dout);
      for (auto& [k, tens] : acc) {
        const Tensor& src = g.at(k);
        for (std::size_t z = 0; z < tens.numel(); ++z) tens.data[z] += src.data[z];
      }
    }
    optimizer_step(OptKind::kRmsProp, online_, acc, cfg_.lr, opt_);
    ++train_steps_;
    advance_beta();
    stats.trained = true;
    stats.loss = loss / double(sample.indices.size());
    stats.beta = beta_;
    return stats;
  }

  void sync_target() {
    target_.weights = online_.weights;
    ++target_.version;
  }

 private:
  void advance_beta() {
    const double mean_len =
        episodes_done_ > 0 ? double(total_episode_steps_) / double(episodes_done_) : 675.0;
    const double expected_total = std::max(1.0, mean_len * double(cfg_.episodes));
    beta_ = std::min(1.0, cfg_.beta0 + (1.0 - cfg_.beta0) * double(env_steps_) / expected_total);
  }

  AgentConfig cfg_;
  Network online_, target_;
  SumTreeBuffer buffer_;
  OptStateT<float> opt_;
  long env_steps_ = 0, train_steps_ = 0;
  long episodes_done_ = 0, total_episode_steps_ = 0;
  double beta_;
};

}  // namespace sdqn
