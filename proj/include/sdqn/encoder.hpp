#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "sdqn/geom.hpp"
#include "sdqn/tensor.hpp"
#include "sdqn/world.hpp"

namespace sdqn {

/// Ego-centred region of interest: an L x W rectangle with 4L/5 ahead of the
/// ego CG and L/5 behind, discretized into l x w cells. Defaults give the
/// 80 x 60 grid with the ego CG in cell (64, 30); the desk profile halves the
/// resolution.
struct RoiSpec {
  double length = 20.0;  // L, along the travel axis
  double width = 15.0;   // W, lateral
  double cell_l = 0.25;  // l
  double cell_w = 0.25;  // w

  std::size_t rows() const { return std::size_t(std::llround(length / cell_l)); }
  std::size_t cols() const { return std::size_t(std::llround(width / cell_w)); }
  std::size_t ego_row() const {
    return std::size_t(std::llround(4.0 * length / (5.0 * cell_l)));
  }
  std::size_t ego_col() const { return std::size_t(std::llround(width / (2.0 * cell_w))); }
  double ahead() const { return 4.0 * length / 5.0; }
  double behind() const { return length / 5.0; }

  static RoiSpec desk() { return {20.0, 15.0, 0.5, 0.5}; }
};

struct RoiVertices {
  Vec2 rear_right, rear_left, front_right, front_left;
};

/// ROI corner coordinates for a grid anchored at (EV_x, EV_y) with angle
/// theta. Note the angle convention: theta measures the grid's REAR axis, so
/// the rectangle extends 4L/5 along -(cos theta, sin theta) and L/5 along
/// +(cos theta, sin theta). A caller that wants the long side ahead of a
/// vehicle travelling along heading h passes theta = h + 180.
inline RoiVertices roi_vertices(Vec2 ev, double theta_deg, const RoiSpec& spec = {}) {
  const double c = std::cos(deg_to_rad(theta_deg)), s = std::sin(deg_to_rad(theta_deg));
  const double rear = spec.length / 5.0, front = 4.0 * spec.length / 5.0;
  const double half_w = spec.width / 2.0;
  RoiVertices v;
  v.rear_right = {ev.x + rear * c + half_w * s, ev.y + rear * s - half_w * c};
  v.rear_left = {ev.x + rear * c - half_w * s, ev.y + rear * s + half_w * c};
  v.front_right = {ev.x - front * c + half_w * s, ev.y - front * s - half_w * c};
  v.front_left = {ev.x - front * c - half_w * s, ev.y - front * s + half_w * c};
  return v;
}

inline RoiVertices roi_vertices(const EgoState& ego, const RoiSpec& spec = {}) {
  // EgoState.heading_deg is the travel direction; convert per the note above.
  return roi_vertices(ego.pos, ego.heading_deg + 180.0, spec);
}

struct Cell {
  std::size_t row = 0, col = 0;
  bool operator==(const Cell&) const = default;
};

/// Maps a world point into the ego-aligned grid. Row 0 is the far-forward
/// edge, col 0 the left edge; cells are half-open so edge points land in
/// exactly one cell. Returns nullopt outside the ROI.
inline std::optional<Cell> world_to_cell(Vec2 point, const EgoState& ego,
                                         const RoiSpec& spec = {}) {
  const Vec2 local = (point - ego.pos).rotated(-ego.heading_deg);
  const double fwd = local.x, lat = local.y;  // +lat is the ego's left
  const double r = std::floor((spec.ahead() - fwd) / spec.cell_l);
  const double c = std::floor((spec.width / 2.0 - lat) / spec.cell_w);
  if (r < 0.0 || r >= double(spec.rows()) || c < 0.0 || c >= double(spec.cols()))
    return std::nullopt;
  return Cell{std::size_t(r), std::size_t(c)};
}

/// 3-layer grid state: layer 0 occupancy (0 free, 0.5 pedestrian, 1 ego),
/// layer 1 |pedestrian speed - ego speed|, layer 2 heading difference wrapped
/// to [-180, 180). Layers 1-2 are nonzero only where layer 0 is 0.5.
struct StateTensor {
  std::size_t rows = 0, cols = 0;
  Tensor grid;  // shape {3, rows, cols}

  float occupancy(std::size_t r, std::size_t c) const { return grid.at3(0, r, c); }
  float rel_speed(std::size_t r, std::size_t c) const { return grid.at3(1, r, c); }
  float rel_heading(std::size_t r, std::size_t c) const { return grid.at3(2, r, c); }
};

inline constexpr float kCellFree = 0.0f;
inline constexpr float kCellPedestrian = 0.5f;
inline constexpr float kCellEgo = 1.0f;

inline StateTensor encode_state_tensor(const std::vector<PedestrianView>& perceived,
                                       const EgoState& ego, const RoiSpec& spec = {}) {
  StateTensor st;
  st.rows = spec.rows();
  st.cols = spec.cols();
  st.grid = Tensor({3, st.rows, st.cols});

  // Pedestrians first; when two share a cell the one nearest the ego wins.
  std::vector<double> owner_dist(st.rows * st.cols, 0.0);
  for (const PedestrianView& p : perceived) {
    const auto cell = world_to_cell(p.pos, ego, spec);
    if (!cell) continue;
    const double dist = distance(p.pos, ego.pos);
    const std::size_t flat = cell->row * st.cols + cell->col;
    if (st.grid.at3(0, cell->row, cell->col) == kCellPedestrian && owner_dist[flat] <= dist)
      continue;
    owner_dist[flat] = dist;
    st.grid.at3(0, cell->row, cell->col) = kCellPedestrian;
    st.grid.at3(1, cell->row, cell->col) = float(std::abs(p.speed - ego.speed));
    st.grid.at3(2, cell->row, cell->col) = float(wrap_deg_180(p.heading_deg - ego.heading_deg));
  }

  // Ego footprint overwrites: cells whose centre lies inside the 4.5 x 2.0 m
  // rectangle around the CG.
  const double half_len = EgoState::kLength / 2.0, half_wid = EgoState::kWidth / 2.0;
  const std::size_t r0 = std::size_t(
      std::max(0.0, std::floor((spec.ahead() - half_len) / spec.cell_l)));
  const std::size_t c0 = std::size_t(
      std::max(0.0, std::floor((spec.width / 2.0 - half_wid) / spec.cell_w)));
  for (std::size_t r = r0; r < st.rows; ++r) {
    const double fwd_c = spec.ahead() - spec.cell_l * (double(r) + 0.5);
    if (fwd_c < -half_len) break;
    if (std::abs(fwd_c) > half_len) continue;
    for (std::size_t c = c0; c < st.cols; ++c) {
      const double lat_c = spec.width / 2.0 - spec.cell_w * (double(c) + 0.5);
      if (lat_c < -half_wid) break;
      if (std::abs(lat_c) > half_wid) continue;
      st.grid.at3(0, r, c) = kCellEgo;
      st.grid.at3(1, r, c) = 0.0f;
      st.grid.at3(2, r, c) = 0.0f;
    }
  }
  return st;
}

}  // namespace sdqn
