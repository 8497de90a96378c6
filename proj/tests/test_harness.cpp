#include "sdqn/harness.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

using namespace sdqn;

namespace {

std::shared_ptr<const IntersectionLayout> four_way() {
  return std::make_shared<IntersectionLayout>(IntersectionLayout::four_way());
}

// Future-model stand-in for scenes where the shield path must exist but is
// never exercised (or where rough endpoints suffice).
TrainedRegressor stub_future() {
  TrainedRegressor r;
  r.net = make_future_net(1);
  r.feat_norm.lo.assign(4, 0.0);
  r.feat_norm.hi.assign(4, 1.0);
  r.label_norm.lo.assign(2, 0.0);
  r.label_norm.hi.assign(2, 1.0);
  return r;
}

EpisodeOptions base_options() {
  EpisodeOptions opts;
  opts.roi = AgentConfig::desk().roi();
  return opts;
}

}  // namespace

TEST(Variants, WiringInvariants) {
  EXPECT_FALSE(uses_belief(AgentVariant::kRl));
  EXPECT_FALSE(uses_shield(AgentVariant::kRl));
  EXPECT_TRUE(uses_belief(AgentVariant::kBeliefUpdate));
  EXPECT_FALSE(uses_shield(AgentVariant::kBeliefUpdate));
  EXPECT_FALSE(uses_belief(AgentVariant::kCollisionDetector));
  EXPECT_TRUE(uses_shield(AgentVariant::kCollisionDetector));
  EXPECT_TRUE(uses_belief(AgentVariant::kSrl));
  EXPECT_TRUE(uses_shield(AgentVariant::kSrl));
  EXPECT_FALSE(uses_qnet(AgentVariant::kRuleBased));
  for (AgentVariant v : all_variants())
    EXPECT_EQ(variant_from_name(variant_name(v)), v);
  EXPECT_THROW(variant_from_name("nope"), ConfigError);
}

TEST(RunEpisode, RuleBasedNeedsNoNetworks) {
  EvalModels none;
  const EpisodeMetrics m =
      run_episode(AgentVariant::kRuleBased, four_way(), none, 42, base_options());
  EXPECT_GT(m.steps, 0);
}

TEST(RunEpisode, MissingModelsAreNamed) {
  EvalModels none;
  try {
    run_episode(AgentVariant::kSrl, four_way(), none, 1, base_options());
    FAIL() << "expected MissingModelError";
  } catch (const MissingModelError& e) {
    EXPECT_NE(std::string(e.what()).find("belief"), std::string::npos);
  }
  try {
    run_episode(AgentVariant::kCollisionDetector, four_way(), none, 1, base_options());
    FAIL() << "expected MissingModelError";
  } catch (const MissingModelError& e) {
    EXPECT_NE(std::string(e.what()).find("future"), std::string::npos);
  }
}

TEST(RunEpisode, DeterministicPerSeed) {
  EvalModels none;
  const EpisodeMetrics a =
      run_episode(AgentVariant::kRuleBased, four_way(), none, 977, base_options());
  const EpisodeMetrics b =
      run_episode(AgentVariant::kRuleBased, four_way(), none, 977, base_options());
  EXPECT_EQ(a.outcome, b.outcome);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_DOUBLE_EQ(a.episode_return, b.episode_return);
  EXPECT_DOUBLE_EQ(a.avg_speed, b.avg_speed);
  EXPECT_DOUBLE_EQ(a.min_distance, b.min_distance);
}

TEST(RunEpisode, EmptyWorldSrlSucceedsWithoutInterventions) {
  const TrainedRegressor future = stub_future();
  EvalModels models;
  models.future = &future;
  TrainedRegressor belief = stub_future();  // never invoked without walkers
  belief.net = make_belief_net(1);
  belief.label_norm.lo.assign(4, 0.0);
  belief.label_norm.hi.assign(4, 1.0);
  models.belief = &belief;

  EpisodeOptions opts = base_options();
  opts.world.spawn_min = 0;
  opts.world.spawn_max = 0;
  opts.world.spawn_batch = 0;
  // Scripted nomination: run up to just under the speed limit, then hold.
  opts.policy_override = [](const EgoState& ego, const std::vector<PedestrianView>&) {
    return ego.speed < 8.8 ? 3 : 1;
  };

  const EpisodeMetrics m = run_episode(AgentVariant::kSrl, four_way(), models, 5, opts);
  EXPECT_EQ(m.outcome, Outcome::kSuccess);
  EXPECT_FALSE(m.speed_violation);
  EXPECT_TRUE(m.success());
  EXPECT_EQ(m.shield_interventions, 0);
  EXPECT_LT(m.crossing_time, 45.0);
  EXPECT_GT(m.crossing_time, 0.0);
}

TEST(RunEpisode, ShieldOutputIsWhatTheTraceRecords) {
  // Crowded world, creeping policy: every trace row must carry the shield's
  // decision, never the raw nomination, whenever it intervenes.
  const TrainedRegressor future = stub_future();
  TrainedRegressor belief = stub_future();
  belief.net = make_belief_net(1);
  belief.label_norm.lo.assign(4, 0.0);
  belief.label_norm.hi.assign(4, 1.0);
  EvalModels models;
  models.future = &future;
  models.belief = &belief;
  EpisodeOptions opts = base_options();
  opts.world.spawn_min = 25;
  opts.world.spawn_max = 30;
  opts.policy_override = [](const EgoState&, const std::vector<PedestrianView>&) { return 3; };

  std::string trace;
  run_episode(AgentVariant::kSrl, four_way(), models, 11, opts, &trace, 0);
  int rows = 0, intervened_rows = 0;
  std::istringstream is(trace);
  std::string line;
  while (std::getline(is, line)) {
    const auto row = nlohmann::json::parse(line);
    if (row["type"] != "step") continue;
    ++rows;
    if (row["intervened"].get<bool>()) {
      ++intervened_rows;
      EXPECT_EQ(row["action_executed"].get<int>(), 0);  // full brake index
    } else {
      EXPECT_EQ(row["action_executed"].get<int>(), row["action_nominated"].get<int>());
    }
  }
  EXPECT_GT(rows, 0);
  EXPECT_GT(intervened_rows, 0);  // a full-throttle nomination through a crowd
}

TEST(RunExperiment, OutcomePartition) {
  EvalModels none;
  const auto res = run_experiment(AgentVariant::kRuleBased, four_way(), none, 12, 3,
                                  base_options(), false);
  for (const EpisodeMetrics& m : res.episodes) {
    const int buckets = (m.outcome == Outcome::kSuccess) + (m.outcome == Outcome::kCollision) +
                        (m.outcome == Outcome::kTimeout);
    EXPECT_EQ(buckets, 1);
  }
  if (res.row.violation_pct == 0.0)
    EXPECT_NEAR(res.row.success_pct + res.row.collision_pct + res.row.timeout_pct, 100.0,
                1e-9);
}

TEST(RunExperiment, WorkerCountDoesNotChangeResults) {
  EvalModels none;
  const auto serial = run_experiment(AgentVariant::kRuleBased, four_way(), none, 8, 5,
                                     base_options(), true, 1);
  const auto pooled = run_experiment(AgentVariant::kRuleBased, four_way(), none, 8, 5,
                                     base_options(), true, 4);
  EXPECT_EQ(serial.jsonl, pooled.jsonl);
  EXPECT_EQ(metrics_csv_row(serial.row), metrics_csv_row(pooled.row));
}

TEST(RunExperiment, AggregatesRecomputableFromTraces) {
  EvalModels none;
  const auto res = run_experiment(AgentVariant::kRuleBased, four_way(), none, 10, 21,
                                  base_options(), true);
  std::vector<EpisodeMetrics> rebuilt;
  std::istringstream is(res.jsonl);
  std::string line;
  while (std::getline(is, line)) {
    const auto row = nlohmann::json::parse(line);
    if (row["type"] != "episode_end") continue;
    EpisodeMetrics m;
    const std::string outcome = row["outcome"].get<std::string>();
    m.outcome = outcome == "success"     ? Outcome::kSuccess
                : outcome == "collision" ? Outcome::kCollision
                                         : Outcome::kTimeout;
    m.speed_violation = row["speed_violation"].get<bool>();
    m.crossing_time = row["crossing_time"].get<double>();
    m.avg_speed = row["avg_speed"].get<double>();
    m.min_distance = row["min_distance"].get<double>();
    m.avg_distance = row["avg_distance"].get<double>();
    m.shield_interventions = row["interventions"].get<int>();
    m.steps = row["steps"].get<int>();
    m.episode_return = row["return"].get<double>();
    rebuilt.push_back(m);
  }
  ASSERT_EQ(rebuilt.size(), res.episodes.size());
  const TableRow re_row = aggregate_metrics("rule-based", rebuilt);
  EXPECT_EQ(metrics_csv_row(re_row), metrics_csv_row(res.row));
}

TEST(TrainVariant, SmokeRunProducesLearnerAndLog) {
  AgentConfig cfg;
  cfg.grid_rows = 10;
  cfg.grid_cols = 8;
  cfg.conv_filters = 4;
  cfg.conv_stages = 1;
  cfg.dense_units = {16};
  cfg.episodes = 3;
  cfg.learn_start = 100;
  cfg.train_every = 10;
  cfg.eps_decay = 0.9;

  EpisodeOptions opts;
  opts.world.spawn_min = 3;
  opts.world.spawn_max = 6;
  EvalModels models;  // rl variant: no belief, no shield

  const TrainResult result =
      train_variant(AgentVariant::kRl, four_way(), models, cfg, 7, opts);
  ASSERT_EQ(result.log.size(), 3u);
  EXPECT_GT(result.log[0].epsilon, result.log[2].epsilon);
  for (const auto& [k, v] : result.qnet.weights) EXPECT_TRUE(v.all_finite()) << k;
  const std::string csv = train_log_csv(result.log);
  EXPECT_NE(csv.find("episode,steps,return,epsilon,beta"), std::string::npos);
}

TEST(TrainVariant, RuleBasedRefusesToTrain) {
  EvalModels none;
  EXPECT_THROW(train_variant(AgentVariant::kRuleBased, four_way(), none, AgentConfig::desk(),
                             1, base_options()),
               ConfigError);
}
