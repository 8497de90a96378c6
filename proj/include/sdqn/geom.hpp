#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdqn/common.hpp"

namespace sdqn {

struct Vec2 {
  double x = 0.0, y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  Vec2 rotated(double ang_deg) const {
    const double c = std::cos(deg_to_rad(ang_deg)), s = std::sin(deg_to_rad(ang_deg));
    return {c * x - s * y, s * x + c * y};
  }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

inline Vec2 heading_vec(double heading_deg) {
  return {std::cos(deg_to_rad(heading_deg)), std::sin(deg_to_rad(heading_deg))};
}

/// Axis of `heading_deg` is +x (forward); +y is the vehicle's left.
struct OrientedRect {
  Vec2 center;
  double heading_deg;
  double length, width;  // along forward / lateral axes

  /// Point expressed in the rect frame (forward, left).
  Vec2 to_local(Vec2 p) const { return (p - center).rotated(-heading_deg); }

  bool contains(Vec2 p) const {
    const Vec2 l = to_local(p);
    return std::abs(l.x) <= length / 2 && std::abs(l.y) <= width / 2;
  }

  /// Euclidean distance from the rectangle boundary/interior to a point
  /// (0 inside).
  double distance_to(Vec2 p) const {
    const Vec2 l = to_local(p);
    const double dx = std::max(0.0, std::abs(l.x) - length / 2);
    const double dy = std::max(0.0, std::abs(l.y) - width / 2);
    return std::hypot(dx, dy);
  }

  std::vector<Vec2> corners() const {
    std::vector<Vec2> out;
    for (auto [fx, fy] : {std::pair{1, 1}, {1, -1}, {-1, -1}, {-1, 1}})
      out.push_back(center + Vec2{fx * length / 2, fy * width / 2}.rotated(heading_deg));
    return out;
  }
};

// ---------------------------------------------------------------------------
// Arc-length parametrized polyline (the ego route). Queries past the last
// waypoint extrapolate along the final tangent so dynamics stay well-defined
// beyond the goal.
// ---------------------------------------------------------------------------

class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    cum_.resize(pts_.size(), 0.0);
    for (std::size_t i = 1; i < pts_.size(); ++i)
      cum_[i] = cum_[i - 1] + distance(pts_[i - 1], pts_[i]);
  }

  const std::vector<Vec2>& points() const { return pts_; }
  double total_length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  /// Index of the last waypoint at or before arclength s.
  std::size_t index_at(double s) const {
    if (s <= 0.0) return 0;
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    const std::size_t i = std::size_t(it - cum_.begin());
    return std::min(i == 0 ? 0 : i - 1, pts_.size() - 1);
  }

  Vec2 point_at(double s) const {
    if (s <= 0.0) return pts_.front();
    if (s >= total_length())
      return pts_.back() + seg_dir(pts_.size() - 2) * (s - total_length());
    const std::size_t i = index_at(s);
    const std::size_t j = std::min(i, pts_.size() - 2);
    return pts_[j] + seg_dir(j) * (s - cum_[j]);
  }

  double tangent_deg_at(double s) const {
    const std::size_t j = std::min(index_at(s), pts_.size() - 2);
    const Vec2 d = seg_dir(j);
    return rad_to_deg(std::atan2(d.y, d.x));
  }

  /// Signed curvature (1/m) at arclength s, from adjacent tangent angles.
  /// Positive = turning left. Stands in for a steering-wheel signal.
  double curvature_at(double s) const {
    const std::size_t j = std::min(index_at(s), pts_.size() - 2);
    if (j + 2 >= pts_.size()) return 0.0;
    const double t0 = tangent_deg_at(cum_[j]);
    const double t1 = tangent_deg_at(cum_[j + 1]);
    const double ds = cum_[j + 1] - cum_[j];
    return ds > 0.0 ? deg_to_rad(wrap_deg_180(t1 - t0)) / ds : 0.0;
  }

  /// Resamples to exactly n points equally spaced in arclength.
  Polyline resampled(std::size_t n) const {
    std::vector<Vec2> out;
    out.reserve(n);
    const double total = total_length();
    for (std::size_t k = 0; k < n; ++k)
      out.push_back(point_at(total * double(k) / double(n - 1)));
    return Polyline(std::move(out));
  }

 private:
  Vec2 seg_dir(std::size_t j) const { return (pts_[j + 1] - pts_[j]).normalized(); }

  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

inline Vec2 cubic_bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, double t) {
  const double u = 1.0 - t;
  return p0 * (u * u * u) + p1 * (3 * u * u * t) + p2 * (3 * u * t * t) + p3 * (t * t * t);
}

}  // namespace sdqn
