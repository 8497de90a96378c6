#include "sdqn/reward.hpp"

#include <gtest/gtest.h>

using namespace sdqn;

namespace {

// Synthetic world pair: ego at the route start heading +y, one pedestrian
// placed straight ahead of the left front corner at distance d.
struct Scene {
  std::shared_ptr<const IntersectionLayout> layout;
  WorldState before, after;

  Scene(double d, double speed, double progress) {
    layout = std::make_shared<IntersectionLayout>(IntersectionLayout::four_way());
    before.layout = layout;
    before.ego.pos = layout->ego_route.points().front();
    before.ego.heading_deg = layout->ego_route.tangent_deg_at(0.0);
    before.ego.route_s = 0.0;
    after = before;
    after.ego.speed = speed;
    after.ego.route_s = progress;
    after.ego.pos = layout->ego_route.point_at(progress);
    if (d > 0.0) {
      const Vec2 fwd = heading_vec(after.ego.heading_deg);
      const Vec2 left{-fwd.y, fwd.x};
      const Vec2 corner =
          after.ego.pos + fwd * (EgoState::kLength / 2) + left * (EgoState::kWidth / 2);
      Pedestrian p;
      p.pos = corner + fwd * d;
      after.pedestrians.push_back(p);
    }
  }
};

}  // namespace

TEST(BumperDistance, UsesFrontCorners) {
  Scene s(5.0, 0.0, 0.0);
  EXPECT_NEAR(bumper_distance(s.after.ego, s.after.pedestrians), 5.0, 1e-9);
}

TEST(Reward, SpeedingTermApplies) {
  // d = 10 > d1, V = 11 > v2: r1*1 + r2*1 + r5 (route start, X_t > d2).
  Scene s(10.0, 11.0, 11.0 / 15.0);
  auto r = compute_reward(s.before, s.after, {});
  EXPECT_NEAR(r.reward, 0.005 + 0.005 - 0.5, 1e-12);
  EXPECT_FALSE(r.terminal);
}

TEST(Reward, NoSpeedingTermAtLimit) {
  Scene fast(10.0, 9.0, 9.0 / 15.0);
  auto r = compute_reward(fast.before, fast.after, {});
  EXPECT_NEAR(r.reward, 0.005 * (9.0 / 10.0) + 0.005 * (9.0 / 10.0), 1e-12);
}

TEST(Reward, CrawlingPenalty) {
  Scene slow(10.0, 1.0, 1.0 / 15.0);
  auto r = compute_reward(slow.before, slow.after, {});
  EXPECT_NEAR(r.reward, 0.005 * 0.1 + 0.005 * 0.1 - 0.25, 1e-12);
}

TEST(Reward, NearBranchSaturatesAndDoubles) {
  // d = d3 = 1 m: proximity term r3, doubled because d <= d4.
  Scene s(1.0, 2.0, 2.0 / 15.0);
  auto r = compute_reward(s.before, s.after, {});
  EXPECT_NEAR(r.reward, -0.5, 1e-12);
}

TEST(Reward, NearBranchMonotoneInDistance) {
  double prev = -1e9;
  for (double d = 1.05; d <= 7.0; d += 0.05) {
    Scene s(d, 2.0, 2.0 / 15.0);
    auto r = compute_reward(s.before, s.after, {});
    EXPECT_GE(r.reward, prev) << "d=" << d;
    prev = r.reward;
  }
}

TEST(Reward, BranchBoundaryIsNear) {
  // d exactly d1 belongs to the near branch and scores 0 there.
  Scene s(7.0, 3.0, 3.0 / 15.0);
  auto r = compute_reward(s.before, s.after, {});
  EXPECT_NEAR(r.reward, 0.0, 1e-12);
}

TEST(Reward, FarBranchStrictlyIncreasesWithProgress) {
  double prev = -1e9;
  for (double ds : {0.0, 0.1, 0.2, 0.4, 0.6}) {
    Scene s(10.0, 5.0, ds);
    auto r = compute_reward(s.before, s.after, {});
    EXPECT_GT(r.reward, prev);
    prev = r.reward;
  }
}

TEST(Reward, GoalShapingInsideD2) {
  // Place the ego close to the goal: X_t < d2 adds r4*(d2-X_t)/d2.
  Scene s(10.0, 5.0, 0.0);
  const double total = s.layout->ego_route.total_length();
  s.after.ego.route_s = total - 5.0;
  s.before.ego.route_s = total - 5.0 - 5.0 / 15.0;
  auto r = compute_reward(s.before, s.after, {});
  // progress_norm = (5/15)/(10/15) = 0.5, speed term = 5/10
  const double expect =
      0.005 * 0.5 + 0.005 * 0.5 + 0.2 * (25.0 - 5.0) / 25.0;
  EXPECT_NEAR(r.reward, expect, 1e-12);
}

TEST(Reward, CollisionOverride) {
  Scene s(0.5, 4.0, 4.0 / 15.0);
  WorldEvents ev;
  ev.collision = true;
  auto r = compute_reward(s.before, s.after, ev);
  EXPECT_DOUBLE_EQ(r.reward, -1.5);
  EXPECT_TRUE(r.terminal);
  EXPECT_EQ(r.outcome, Outcome::kCollision);
}

TEST(Reward, GoalAddsBonus) {
  Scene s(10.0, 5.0, 5.0 / 15.0);
  auto base = compute_reward(s.before, s.after, {});
  WorldEvents ev;
  ev.goal = true;
  auto r = compute_reward(s.before, s.after, ev);
  EXPECT_NEAR(r.reward, base.reward + 1.5, 1e-12);
  EXPECT_TRUE(r.terminal);
  EXPECT_EQ(r.outcome, Outcome::kSuccess);
}

TEST(Reward, TimeoutTerminalNoExtra) {
  Scene s(10.0, 5.0, 5.0 / 15.0);
  auto base = compute_reward(s.before, s.after, {});
  WorldEvents ev;
  ev.timeout = true;
  auto r = compute_reward(s.before, s.after, ev);
  EXPECT_DOUBLE_EQ(r.reward, base.reward);
  EXPECT_TRUE(r.terminal);
  EXPECT_EQ(r.outcome, Outcome::kTimeout);
}

TEST(Reward, CollisionBeatsGoal) {
  Scene s(0.2, 4.0, 4.0 / 15.0);
  WorldEvents ev;
  ev.collision = true;
  ev.goal = true;
  auto r = compute_reward(s.before, s.after, ev);
  EXPECT_EQ(r.outcome, Outcome::kCollision);
  EXPECT_DOUBLE_EQ(r.reward, -1.5);
}

TEST(RewardParams, OrderingInvariants) {
  RewardParams p;
  EXPECT_LT(p.d3, p.d4);
  EXPECT_LT(p.d4, p.d1);
  EXPECT_LT(p.d1, p.d2);
  EXPECT_LT(p.v1, p.v2);
}
