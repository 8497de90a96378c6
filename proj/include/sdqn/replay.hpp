#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "sdqn/common.hpp"
#include "sdqn/tensor.hpp"

namespace sdqn {

/// One stored experience: grid state + ego speed on both sides of the step.
struct Transition {
  Tensor state;  // {3, rows, cols}
  float ego_speed = 0.f;
  int action = 0;  // index into the 4-action table
  float reward = 0.f;
  Tensor next_state;
  float next_ego_speed = 0.f;
  bool terminal = false;
};

inline constexpr double kPerEpsilon = 1e-5;  // keeps every priority positive

/// Eq.-9 sampling distribution: P(i) = p_i^alpha / sum_k p_k^alpha.
inline std::vector<double> sample_probability(const std::vector<double>& priorities,
                                              double alpha) {
  if (priorities.empty()) throw StateError("sample_probability: empty buffer");
  std::vector<double> out(priorities.size());
  double total = 0.0;
  for (std::size_t i = 0; i < priorities.size(); ++i) {
    out[i] = std::pow(priorities[i], alpha);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

/// Eq.-10 importance weights w = (1/N * 1/P)^beta, normalized by the batch
/// max so the largest weight is exactly 1.
inline std::vector<double> importance_weights(const std::vector<double>& sampled_probs,
                                              std::size_t buffer_size, double beta) {
  std::vector<double> w(sampled_probs.size());
  double wmax = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::pow(1.0 / (double(buffer_size) * sampled_probs[i]), beta);
    wmax = std::max(wmax, w[i]);
  }
  if (wmax > 0.0)
    for (double& v : w) v /= wmax;
  return w;
}

/// Proportional prioritized replay over a binary sum tree. Stores p^alpha at
/// the leaves; a ring buffer evicts oldest first. New transitions enter at
/// the current max priority so each is trained on at least once.
class SumTreeBuffer {
 public:
  explicit SumTreeBuffer(std::size_t capacity = 10000, double alpha = 0.6)
      : capacity_(capacity), alpha_(alpha) {
    std::size_t leaves = 1;
    while (leaves < capacity_) leaves <<= 1;
    leaves_ = leaves;
    tree_.assign(2 * leaves_, 0.0);
    data_.resize(capacity_);
  }

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  double total_mass() const { return tree_[1]; }
  double max_priority() const { return max_priority_; }

  void push(Transition t) {
    data_[write_] = std::move(t);
    set_leaf(write_, std::pow(max_priority_, alpha_));
    write_ = (write_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  struct Sample {
    std::vector<std::size_t> indices;  // leaf slots, for priority updates
    std::vector<double> probs;         // P(i) under Eq. 9
  };

  /// Stratified sampling: the cumulative mass splits into `batch` equal
  /// segments with one uniform draw each.
  Sample sample(std::size_t batch, Rng& rng, std::size_t learn_start = 750) const {
    if (size_ < learn_start)
      throw StateError("buffer_sample: size " + std::to_string(size_) +
                       " below learn start " + std::to_string(learn_start));
    Sample s;
    s.indices.reserve(batch);
    s.probs.reserve(batch);
    const double total = tree_[1];
    const double seg = total / double(batch);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t j = 0; j < batch; ++j) {
      const double mass = (double(j) + unit(rng)) * seg;
      const std::size_t leaf = descend(mass);
      s.indices.push_back(leaf);
      s.probs.push_back(tree_[leaves_ + leaf] / total);
    }
    return s;
  }

  const Transition& at(std::size_t index) const { return data_[index]; }

  /// Priority update after training: p = |delta| + epsilon.
  void update_priority(std::size_t index, double td_error) {
    const double p = std::abs(td_error) + kPerEpsilon;
    max_priority_ = std::max(max_priority_, p);
    set_leaf(index, std::pow(p, alpha_));
  }

  /// Structural invariant: every internal node equals the sum of its
  /// children (within floating tolerance).
  bool tree_consistent(double rel_tol = 1e-9) const {
    for (std::size_t n = 1; n < leaves_; ++n) {
      const double kids = tree_[2 * n] + tree_[2 * n + 1];
      if (std::abs(tree_[n] - kids) > rel_tol * std::max(1.0, std::abs(tree_[n])))
        return false;
    }
    return true;
  }

  std::vector<double> leaf_masses() const {
    return std::vector<double>(tree_.begin() + std::ptrdiff_t(leaves_),
                               tree_.begin() + std::ptrdiff_t(leaves_ + size_));
  }

 private:
  void set_leaf(std::size_t idx, double value) {
    std::size_t n = leaves_ + idx;
    const double delta = value - tree_[n];
    for (; n >= 1; n /= 2) tree_[n] += delta;
  }

  std::size_t descend(double mass) const {
    std::size_t n = 1;
    while (n < leaves_) {
      if (mass <= tree_[2 * n] || tree_[2 * n + 1] <= 0.0) {
        n = 2 * n;
      } else {
        mass -= tree_[2 * n];
        n = 2 * n + 1;
      }
    }
    return std::min(n - leaves_, size_ == 0 ? 0 : size_ - 1);
  }

  std::size_t capacity_, leaves_ = 0;
  std::size_t write_ = 0, size_ = 0;
  double alpha_;
  double max_priority_ = 1.0;
  std::vector<double> tree_;
  std::vector<Transition> data_;
};

}  // namespace sdqn
