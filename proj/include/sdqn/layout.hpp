#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sdqn/geom.hpp"

namespace sdqn {

enum class LayoutKind { kFourWay, kThreeWay };

inline const char* layout_kind_name(LayoutKind k) {
  return k == LayoutKind::kFourWay ? "four-way" : "three-way";
}

/// Pedestrian crossing: a centerline segment plus a band width. Walkers spawn
/// on crosswalks and pick destinations on (other) crosswalks.
struct Crosswalk {
  Vec2 a, b;
  double width = 2.0;

  Vec2 point(double t, double lateral) const {
    const Vec2 dir = (b - a).normalized();
    const Vec2 normal{-dir.y, dir.x};
    return a + (b - a) * t + normal * lateral;
  }
};

struct IntersectionLayout {
  LayoutKind kind = LayoutKind::kFourWay;
  double box_w = 22.0, box_h = 22.0;  // junction box extents
  double road_half_width = 7.0;
  double arm_length = 15.0;  // road beyond the box edge
  std::vector<Crosswalk> crosswalks;
  Polyline ego_route;  // exactly 100 waypoints, spawn -> left turn -> goal

  static constexpr std::size_t kRouteWaypoints = 100;

  static IntersectionLayout four_way();
  static IntersectionLayout three_way();
  static IntersectionLayout of(LayoutKind k) {
    return k == LayoutKind::kFourWay ? four_way() : three_way();
  }
};

namespace detail {

inline Polyline build_turn_route(Vec2 spawn, Vec2 entry, Vec2 entry_dir, Vec2 exit,
                                 Vec2 exit_dir, Vec2 goal, double pull) {
  // Straight approach, a cubic turn tangent to both headings, straight exit.
  std::vector<Vec2> dense;
  dense.push_back(spawn);
  const Vec2 p1 = entry + entry_dir * pull;
  const Vec2 p2 = exit - exit_dir * pull;
  for (int i = 0; i <= 64; ++i)
    dense.push_back(cubic_bezier(entry, p1, p2, exit, double(i) / 64.0));
  dense.push_back(goal);
  return Polyline(std::move(dense)).resampled(IntersectionLayout::kRouteWaypoints);
}

}  // namespace detail

/// 22 m x 22 m four-way junction. The ego approaches northbound on the south
/// arm and turns left onto the west arm. Crosswalks sit 1 m outside the box
/// on all four arms.
inline IntersectionLayout IntersectionLayout::four_way() {
  IntersectionLayout l;
  l.kind = LayoutKind::kFourWay;
  l.box_w = 22.0;
  l.box_h = 22.0;
  const double hb = l.box_h / 2.0;  // 11
  const double lane = 1.75;
  const double rw = l.road_half_width;
  const double cw_off = hb + 1.0;  // 12

  l.crosswalks = {
      {{-rw, -cw_off}, {rw, -cw_off}},  // south
      {{-rw, cw_off}, {rw, cw_off}},    // north
      {{cw_off, -rw}, {cw_off, rw}},    // east
      {{-cw_off, -rw}, {-cw_off, rw}},  // west
  };

  const Vec2 spawn{lane, -(hb + l.arm_length)};
  const Vec2 entry{lane, -hb};
  const Vec2 exit{-hb, -lane};
  const Vec2 goal{-(hb + l.arm_length), -lane};
  l.ego_route = detail::build_turn_route(spawn, entry, {0, 1}, exit, {-1, 0}, goal, 7.0);
  return l;
}

/// 26 m x 20 m three-way (T) junction with west, east and south arms. The ego
/// approaches westbound on the east arm and turns left onto the south arm.
inline IntersectionLayout IntersectionLayout::three_way() {
  IntersectionLayout l;
  l.kind = LayoutKind::kThreeWay;
  l.box_w = 26.0;
  l.box_h = 20.0;
  const double hw = l.box_w / 2.0;  // 13
  const double hh = l.box_h / 2.0;  // 10
  const double lane = 1.75;
  const double rw = l.road_half_width;

  l.crosswalks = {
      {{hw + 1.0, -rw}, {hw + 1.0, rw}},    // east
      {{-hw - 1.0, -rw}, {-hw - 1.0, rw}},  // west
      {{-rw, -hh - 1.0}, {rw, -hh - 1.0}},  // south
  };

  const Vec2 spawn{hw + l.arm_length, lane};
  const Vec2 entry{hw, lane};
  const Vec2 exit{-lane, -hh};
  const Vec2 goal{-lane, -(hh + l.arm_length)};
  l.ego_route = detail::build_turn_route(spawn, entry, {-1, 0}, exit, {0, -1}, goal, 7.0);
  return l;
}

}  // namespace sdqn
