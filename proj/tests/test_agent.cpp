#include "sdqn/agent.hpp"

#include <gtest/gtest.h>

using namespace sdqn;

namespace {

Tensor q_row(std::initializer_list<float> v) { return Tensor::from_values(v); }

// Tiny architecture for fast learner tests.
AgentConfig tiny_config() {
  AgentConfig c;
  c.grid_rows = 10;
  c.grid_cols = 8;
  c.conv_filters = 4;
  c.conv_stages = 1;
  c.dense_units = {16};
  c.learn_start = 8;
  c.batch = 8;
  c.episodes = 10;
  return c;
}

Transition synthetic_transition(Rng& rng, int action, float reward) {
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  Transition t;
  t.state = Tensor({3, 10, 8});
  for (auto& v : t.state.data) v = dist(rng);
  t.next_state = t.state;
  t.action = action;
  t.reward = reward;
  t.terminal = true;  // fit-a-constant task: target is just the reward
  return t;
}

}  // namespace

TEST(DqnTarget, SpecExamples) {
  EXPECT_DOUBLE_EQ(dqn_target(-1.5, q_row({9.f, 9.f, 9.f, 9.f}), true, 0.95), -1.5);
  EXPECT_DOUBLE_EQ(dqn_target(0.0, q_row({1.f, 2.f, 0.f, -1.f}), false, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(dqn_target(0.7, q_row({1.f, 2.f, 0.f, -1.f}), false, 0.0), 0.7);
}

TEST(DdqnTarget, DecouplingIsThePoint) {
  // Online argmax = 1; target evaluates it: 1 + 0.95*2.0 = 2.9, not
  // 1 + 0.95*9.9 = 10.405.
  const Tensor q_online = q_row({0.2f, 0.5f, 0.1f, 0.0f});
  const Tensor q_target = q_row({1.0f, 2.0f, 9.9f, 0.0f});
  const double y = ddqn_target(1.0, q_online, q_target, false, 0.95);
  EXPECT_NEAR(y, 2.9, 1e-6);
  EXPECT_GT(std::abs(y - 10.405), 7.0);
}

TEST(DdqnTarget, DegeneratesToDqnWhenNetsEqual) {
  const Tensor q = q_row({0.3f, -0.2f, 0.9f, 0.1f});
  EXPECT_DOUBLE_EQ(ddqn_target(0.5, q, q, false, 0.9), dqn_target(0.5, q, false, 0.9));
}

TEST(DdqnTarget, TerminalIgnoresNextState) {
  const Tensor junk = q_row({1e9f, -1e9f, 5e8f, 0.f});
  EXPECT_DOUBLE_EQ(ddqn_target(-1.5, junk, junk, true, 0.95), -1.5);
}

TEST(TdError, HandValue) {
  const Tensor q_online_next = q_row({0.2f, 0.5f, 0.1f, 0.0f});
  const Tensor q_target_next = q_row({1.0f, 2.0f, 9.9f, 0.0f});
  const Tensor q_state = q_row({0.f, 2.0f, 0.f, 0.f});
  const double delta =
      td_error(1.0, false, q_online_next, q_target_next, q_state, 1, 0.95);
  EXPECT_NEAR(delta, 0.9, 1e-6);
  // Priorities stay positive by construction.
  EXPECT_GT(std::abs(delta) + kPerEpsilon, 0.0);
  // Perfectly predicted transition: Q(s,a) equals the DDQN target 0.95*2.0.
  const double perfect = td_error(0.0, false, q_online_next, q_target_next,
                                  q_row({0.f, 1.9f, 0.f, 0.f}), 1, 0.95);
  EXPECT_NEAR(perfect, 0.0, 1e-6);
}

TEST(EpsilonSchedule, SpecValues) {
  EXPECT_DOUBLE_EQ(epsilon_schedule(0), 1.0);
  EXPECT_NEAR(epsilon_schedule(100), std::pow(0.99, 100), 1e-12);
  EXPECT_NEAR(epsilon_schedule(100), 0.366, 0.001);
  EXPECT_DOUBLE_EQ(epsilon_schedule(500), 0.05);
}

TEST(SelectAction, GreedyPicksArgmax) {
  Rng rng = make_rng(1);
  EXPECT_EQ(select_action_q(q_row({0.1f, 0.9f, 0.3f, 0.3f}), 0.0, rng), 1);
}

TEST(SelectAction, FullyRandomIsUniform) {
  Rng rng = make_rng(77);
  std::array<long, 4> counts{};
  const long draws = 100000;
  const Tensor q = q_row({0.1f, 0.9f, 0.3f, 0.3f});
  for (long i = 0; i < draws; ++i) ++counts[std::size_t(select_action_q(q, 1.0, rng))];
  for (long c : counts) EXPECT_NEAR(double(c) / double(draws), 0.25, 0.02);
}

TEST(SelectAction, ArgmaxInvariantUnderShift) {
  Rng rng = make_rng(1);
  const Tensor q = q_row({-0.4f, 1.2f, 0.7f, -2.0f});
  Tensor shifted = q;
  for (auto& v : shifted.data) v += 13.25f;
  EXPECT_EQ(select_action_q(q, 0.0, rng), select_action_q(shifted, 0.0, rng));
}

TEST(DqnAgent, TargetSyncCadence) {
  AgentConfig cfg = tiny_config();
  cfg.target_update_every = 10;
  DqnAgent agent(cfg, 3);
  Rng rng = make_rng(4);
  for (int i = 1; i <= 25; ++i) {
    const bool synced = agent.observe(synthetic_transition(rng, i % 4, 0.f));
    EXPECT_EQ(synced, i % 10 == 0) << i;
    if (synced) {
      for (const auto& [k, v] : agent.online().weights)
        EXPECT_EQ(v.data, agent.target().weights.at(k).data) << k;
    }
  }
}

TEST(DqnAgent, OverfitsAFrozenBatch) {
  AgentConfig cfg = tiny_config();
  DqnAgent agent(cfg, 5);
  Rng rng = make_rng(6);
  for (int i = 0; i < 8; ++i)
    agent.observe(synthetic_transition(rng, i % 4, 0.5f));
  ASSERT_TRUE(agent.ready_to_learn());
  Rng learn_rng = make_rng(7);
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    const auto stats = agent.train_step(learn_rng);
    if (step == 0) first = stats.loss;
    last = stats.loss;
  }
  EXPECT_LT(last, first * 0.5);
}

TEST(DqnAgent, BetaAnnealsTowardOne) {
  AgentConfig cfg = tiny_config();
  cfg.episodes = 2;
  DqnAgent agent(cfg, 8);
  Rng rng = make_rng(9);
  for (int i = 0; i < 8; ++i) agent.observe(synthetic_transition(rng, 0, 0.1f));
  agent.end_episode(8);
  Rng learn_rng = make_rng(10);
  double prev = agent.beta();
  EXPECT_DOUBLE_EQ(prev, 0.4);
  for (int i = 0; i < 30; ++i) {
    agent.observe(synthetic_transition(rng, 0, 0.1f));
    const auto stats = agent.train_step(learn_rng);
    EXPECT_GE(stats.beta, prev);
    prev = stats.beta;
  }
  EXPECT_GT(prev, 0.4);
  EXPECT_LE(prev, 1.0);
}

TEST(DqnAgent, DeskProfileShapes) {
  const AgentConfig desk = AgentConfig::desk();
  const Network net = make_q_net(desk, 1);
  EXPECT_EQ(net.input_shape, (Shape{3, 40, 30}));
  EXPECT_EQ(net.output_shape(), (Shape{4}));
  const RoiSpec roi = desk.roi();
  EXPECT_EQ(roi.rows(), 40u);
  EXPECT_EQ(roi.cols(), 30u);
  EXPECT_EQ(roi.ego_row(), 32u);
}

TEST(DqnAgent, FinalReluFlagClampsQ) {
  AgentConfig cfg = tiny_config();
  cfg.final_relu = true;
  DqnAgent agent(cfg, 11);
  Rng rng = make_rng(12);
  std::uniform_real_distribution<float> dist(0.f, 1.f);
  Tensor state({3, 10, 8});
  for (auto& v : state.data) v = dist(rng);
  const Tensor q = agent.q_values(state, 2.f);
  for (float v : q.data) EXPECT_GE(v, 0.f);
}
