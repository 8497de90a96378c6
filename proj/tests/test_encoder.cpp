#include "sdqn/encoder.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sdqn;

namespace {

EgoState ego_at(Vec2 pos, double heading, double speed = 0.0) {
  EgoState e;
  e.pos = pos;
  e.heading_deg = heading;
  e.speed = speed;
  return e;
}

PedestrianView ped_at(Vec2 pos, double speed = 0.0, double heading = 0.0) {
  return {0, pos, speed, heading};
}

std::size_t count_value(const StateTensor& st, float v) {
  std::size_t n = 0;
  for (std::size_t r = 0; r < st.rows; ++r)
    for (std::size_t c = 0; c < st.cols; ++c)
      if (st.occupancy(r, c) == v) ++n;
  return n;
}

}  // namespace

TEST(RoiSpec, DefaultGridAndAnchor) {
  RoiSpec spec;
  EXPECT_EQ(spec.rows(), 80u);
  EXPECT_EQ(spec.cols(), 60u);
  EXPECT_EQ(spec.ego_row(), 64u);
  EXPECT_EQ(spec.ego_col(), 30u);
  RoiSpec desk = RoiSpec::desk();
  EXPECT_EQ(desk.rows(), 40u);
  EXPECT_EQ(desk.cols(), 30u);
  EXPECT_EQ(desk.ego_row(), 32u);
  EXPECT_EQ(desk.ego_col(), 15u);
}

TEST(RoiVertices, ThetaZero) {
  const auto v = roi_vertices(Vec2{0, 0}, 0.0);
  EXPECT_NEAR(v.rear_right.x, 4.0, 1e-12);
  EXPECT_NEAR(v.rear_right.y, -7.5, 1e-12);
  EXPECT_NEAR(v.rear_left.x, 4.0, 1e-12);
  EXPECT_NEAR(v.rear_left.y, 7.5, 1e-12);
  EXPECT_NEAR(v.front_right.x, -16.0, 1e-12);
  EXPECT_NEAR(v.front_right.y, -7.5, 1e-12);
}

TEST(RoiVertices, ThetaNinety) {
  const auto v = roi_vertices(Vec2{0, 0}, 90.0);
  EXPECT_NEAR(v.rear_right.x, 7.5, 1e-12);
  EXPECT_NEAR(v.rear_right.y, 4.0, 1e-12);
}

TEST(RoiVertices, RigidRectangleAtAnyAngle) {
  Rng rng = make_rng(31);
  std::uniform_real_distribution<double> ang(0.0, 360.0);
  std::uniform_real_distribution<double> coord(-50.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    const Vec2 ev{coord(rng), coord(rng)};
    const auto v = roi_vertices(ev, ang(rng));
    EXPECT_NEAR(distance(v.rear_right, v.front_right), 20.0, 1e-9);
    EXPECT_NEAR(distance(v.rear_left, v.front_left), 20.0, 1e-9);
    EXPECT_NEAR(distance(v.rear_right, v.rear_left), 15.0, 1e-9);
    EXPECT_NEAR(distance(v.front_right, v.front_left), 15.0, 1e-9);
    EXPECT_NEAR(distance(v.rear_right, v.front_left), std::hypot(20.0, 15.0), 1e-9);
  }
}

TEST(WorldToCell, EgoCenterIsAnchorCell) {
  const EgoState ego = ego_at({3.0, -5.0}, 37.0);
  const auto cell = world_to_cell(ego.pos, ego);
  ASSERT_TRUE(cell.has_value());
  EXPECT_EQ(cell->row, 64u);
  EXPECT_EQ(cell->col, 30u);
}

TEST(WorldToCell, FarAheadIsOutside) {
  const EgoState ego = ego_at({0, 0}, 0.0);
  // 25 m ahead along the travel direction: beyond the 16 m forward extent.
  EXPECT_FALSE(world_to_cell({25.0, 0.0}, ego).has_value());
  // 10 m ahead is inside.
  EXPECT_TRUE(world_to_cell({10.0, 0.0}, ego).has_value());
  // 5 m behind is inside (rear extent 4 m fails only past -4).
  EXPECT_FALSE(world_to_cell({-5.0, 0.0}, ego).has_value());
  EXPECT_TRUE(world_to_cell({-3.5, 0.0}, ego).has_value());
}

TEST(WorldToCell, AheadLandsForwardOfAnchorRow) {
  const EgoState ego = ego_at({0, 0}, 0.0);
  const auto cell = world_to_cell({5.0, 0.0}, ego);
  ASSERT_TRUE(cell.has_value());
  EXPECT_EQ(cell->row, 44u);  // 5 m / 0.25 m = 20 rows forward of row 64
  EXPECT_EQ(cell->col, 30u);
}

TEST(WorldToCell, JointRotationInvariance) {
  Rng rng = make_rng(7);
  std::uniform_real_distribution<double> ang(0.0, 360.0);
  std::uniform_real_distribution<double> coord(-20.0, 20.0);
  for (int i = 0; i < 500; ++i) {
    const EgoState ego = ego_at({coord(rng), coord(rng)}, ang(rng));
    const Vec2 point{coord(rng), coord(rng)};
    const auto base = world_to_cell(point, ego);

    const double phi = ang(rng);
    const Vec2 center{coord(rng), coord(rng)};
    EgoState moved = ego;
    moved.pos = center + (ego.pos - center).rotated(phi);
    moved.heading_deg = ego.heading_deg + phi;
    const Vec2 point2 = center + (point - center).rotated(phi);
    const auto rotated = world_to_cell(point2, moved);

    ASSERT_EQ(base.has_value(), rotated.has_value());
    if (base) {
      EXPECT_EQ(base->row, rotated->row);
      EXPECT_EQ(base->col, rotated->col);
    }
  }
}

TEST(WorldToCell, EdgePointsMapToExactlyOneCell) {
  const EgoState ego = ego_at({0, 0}, 0.0);
  // fwd = 15.75 sits on the row 0 / row 1 edge; half-open puts it in row 1.
  const auto on_edge = world_to_cell({15.75, 0.0}, ego);
  ASSERT_TRUE(on_edge.has_value());
  EXPECT_EQ(on_edge->row, 1u);
  const auto just_fwd = world_to_cell({15.7500001, 0.0}, ego);
  ASSERT_TRUE(just_fwd.has_value());
  EXPECT_EQ(just_fwd->row, 0u);
}

TEST(Encode, EmptySceneMarksExactlyTheFootprint) {
  const EgoState ego = ego_at({12.0, 4.0}, 58.0);
  const StateTensor st = encode_state_tensor({}, ego);
  EXPECT_EQ(count_value(st, kCellEgo), 144u);  // 18 x 8 cells
  EXPECT_EQ(count_value(st, kCellPedestrian), 0u);
  for (std::size_t r = 0; r < st.rows; ++r)
    for (std::size_t c = 0; c < st.cols; ++c) {
      EXPECT_EQ(st.rel_speed(r, c), 0.f);
      EXPECT_EQ(st.rel_heading(r, c), 0.f);
    }
  // Footprint is centred on the anchor cell.
  EXPECT_EQ(st.occupancy(64, 30), kCellEgo);
}

TEST(Encode, PedestrianRelativeFields) {
  // Ego at 3 m/s heading 0; static pedestrian 5 m dead ahead heading 90.
  const EgoState ego = ego_at({0, 0}, 0.0, 3.0);
  const StateTensor st = encode_state_tensor({ped_at({5.0, 0.0}, 0.0, 90.0)}, ego);
  EXPECT_EQ(st.occupancy(44, 30), kCellPedestrian);
  EXPECT_FLOAT_EQ(st.rel_speed(44, 30), 3.0f);
  EXPECT_FLOAT_EQ(st.rel_heading(44, 30), 90.0f);
}

TEST(Encode, OutOfRoiPedestrianIsInvisible) {
  const EgoState ego = ego_at({0, 0}, 0.0, 2.0);
  const StateTensor empty = encode_state_tensor({}, ego);
  const StateTensor with = encode_state_tensor({ped_at({40.0, 40.0}, 1.0, 10.0)}, ego);
  EXPECT_EQ(empty.grid.data, with.grid.data);
}

TEST(Encode, SameCellTieBreakKeepsNearest) {
  const EgoState ego = ego_at({0, 0}, 0.0, 0.0);
  // Both land in the cell covering fwd in (4.75, 5.0]; nearest wins
  // regardless of order.
  const PedestrianView near = ped_at({4.85, 0.0}, 1.0, 0.0);
  const PedestrianView far = ped_at({4.95, 0.0}, 1.5, 0.0);
  const auto cell_near = world_to_cell(near.pos, ego);
  const auto cell_far = world_to_cell(far.pos, ego);
  ASSERT_TRUE(cell_near && cell_far);
  ASSERT_EQ(cell_near->row, cell_far->row);

  for (auto order : {std::vector<PedestrianView>{near, far},
                     std::vector<PedestrianView>{far, near}}) {
    const StateTensor st = encode_state_tensor(order, ego);
    EXPECT_FLOAT_EQ(st.rel_speed(cell_near->row, cell_near->col), 1.0f);
  }
}

TEST(Encode, SparsityAndLayerCoupling) {
  Rng rng = make_rng(17);
  std::uniform_real_distribution<double> coord(-20.0, 20.0);
  std::uniform_real_distribution<double> spd(0.2, 1.8);
  std::uniform_real_distribution<double> ang(0.0, 360.0);
  for (int trial = 0; trial < 20; ++trial) {
    const EgoState ego = ego_at({coord(rng), coord(rng)}, ang(rng), 3.0);
    std::vector<PedestrianView> peds;
    std::size_t in_roi = 0;
    for (int i = 0; i < 25; ++i) {
      const PedestrianView p = ped_at({coord(rng), coord(rng)}, spd(rng), ang(rng));
      peds.push_back(p);
      if (world_to_cell(p.pos, ego)) ++in_roi;
    }
    const StateTensor st = encode_state_tensor(peds, ego);
    EXPECT_LE(count_value(st, kCellPedestrian), in_roi);
    for (std::size_t r = 0; r < st.rows; ++r)
      for (std::size_t c = 0; c < st.cols; ++c)
        if (st.rel_speed(r, c) != 0.f || st.rel_heading(r, c) != 0.f)
          ASSERT_EQ(st.occupancy(r, c), kCellPedestrian);
  }
}

TEST(Encode, FrameInvarianceSample) {
  Rng rng = make_rng(23);
  std::uniform_real_distribution<double> coord(-15.0, 15.0);
  std::uniform_real_distribution<double> ang(0.0, 360.0);
  std::uniform_real_distribution<double> spd(0.2, 1.8);
  for (int trial = 0; trial < 200; ++trial) {
    EgoState ego = ego_at({coord(rng), coord(rng)}, ang(rng), 2.5);
    std::vector<PedestrianView> peds;
    for (int i = 0; i < 8; ++i) peds.push_back(ped_at({coord(rng), coord(rng)}, spd(rng), ang(rng)));
    const StateTensor base = encode_state_tensor(peds, ego);

    const double phi = ang(rng);
    const Vec2 center{coord(rng), coord(rng)};
    EgoState moved = ego;
    moved.pos = center + (ego.pos - center).rotated(phi);
    moved.heading_deg = ego.heading_deg + phi;
    std::vector<PedestrianView> moved_peds;
    for (const auto& p : peds) {
      PedestrianView q = p;
      q.pos = center + (p.pos - center).rotated(phi);
      q.heading_deg = p.heading_deg + phi;
      moved_peds.push_back(q);
    }
    const StateTensor rotated = encode_state_tensor(moved_peds, moved);
    ASSERT_EQ(base.grid.data, rotated.grid.data) << "trial " << trial;
  }
}
