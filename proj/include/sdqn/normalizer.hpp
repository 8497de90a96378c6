#pragma once

#include <limits>
#include <vector>

#include "sdqn/tensor.hpp"

namespace sdqn {

/// Per-column affine map onto [0, 1] with stored min/max. The map itself is
/// computed in double so transform -> inverse is an identity well inside 1e-6;
/// columns with zero range map to 0.5.
struct AffineNormalizer {
  std::vector<double> lo, hi;

  static AffineNormalizer fit(const std::vector<float>& rows, std::size_t cols) {
    AffineNormalizer n;
    n.lo.assign(cols, std::numeric_limits<double>::max());
    n.hi.assign(cols, std::numeric_limits<double>::lowest());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t c = i % cols;
      n.lo[c] = std::min(n.lo[c], double(rows[i]));
      n.hi[c] = std::max(n.hi[c], double(rows[i]));
    }
    return n;
  }

  double transform1(double v, std::size_t c) const {
    const double range = hi[c] - lo[c];
    return range > 0.0 ? (v - lo[c]) / range : 0.5;
  }
  double inverse1(double v, std::size_t c) const {
    const double range = hi[c] - lo[c];
    return range > 0.0 ? v * range + lo[c] : lo[c];
  }

  Tensor lo_tensor() const {
    Tensor t({lo.size()});
    for (std::size_t i = 0; i < lo.size(); ++i) t.data[i] = float(lo[i]);
    return t;
  }
  Tensor hi_tensor() const {
    Tensor t({hi.size()});
    for (std::size_t i = 0; i < hi.size(); ++i) t.data[i] = float(hi[i]);
    return t;
  }
  static AffineNormalizer from_tensors(const Tensor& lo_t, const Tensor& hi_t) {
    AffineNormalizer n;
    n.lo.assign(lo_t.data.begin(), lo_t.data.end());
    n.hi.assign(hi_t.data.begin(), hi_t.data.end());
    return n;
  }
};

}  // namespace sdqn
