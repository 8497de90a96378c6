#pragma once

#include <cmath>
#include <map>
#include <string>

#include "sdqn/nn.hpp"
#include "sdqn/tensor.hpp"

namespace sdqn {

enum class OptKind { kRmsProp, kAdam };

/// Moment accumulators keyed like the weight map. One OptState belongs to one
/// network; reusing it across nets is a key-mismatch error.
template <typename T>
struct OptStateT {
  std::map<std::string, TensorT<T>> m1;  // adam first moment / rmsprop mean-square
  std::map<std::string, TensorT<T>> m2;  // adam second moment
  long step = 0;

  // rmsprop: keras-style defaults
  double rms_rho = 0.9, rms_eps = 1e-7;
  // adam
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
};

using OptState = OptStateT<float>;

template <typename T>
void optimizer_step(OptKind kind, NetworkT<T>& params, const GradMapT<T>& grads, double lr,
                    OptStateT<T>& state) {
  if (grads.size() != params.weights.size())
    throw StateError("optimizer_step: gradient keys do not match weights");
  for (const auto& [k, g] : grads) {
    auto it = params.weights.find(k);
    if (it == params.weights.end())
      throw StateError("optimizer_step: no weight named '" + k + "'");
    if (g.shape != it->second.shape)
      throw ShapeError("optimizer_step: gradient shape mismatch for '" + k + "'");
  }
  ++state.step;
  for (auto& [k, w] : params.weights) {
    const TensorT<T>& g = grads.at(k);
    if (kind == OptKind::kRmsProp) {
      auto [it, fresh] = state.m1.try_emplace(k, TensorT<T>(w.shape));
      TensorT<T>& s = it->second;
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const double gi = double(g.data[i]);
        const double si = state.rms_rho * double(s.data[i]) + (1.0 - state.rms_rho) * gi * gi;
        s.data[i] = T(si);
        w.data[i] = T(double(w.data[i]) - lr * gi / (std::sqrt(si) + state.rms_eps));
      }
    } else {
      auto [it1, f1] = state.m1.try_emplace(k, TensorT<T>(w.shape));
      auto [it2, f2] = state.m2.try_emplace(k, TensorT<T>(w.shape));
      TensorT<T>& m = it1->second;
      TensorT<T>& v = it2->second;
      const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
      const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const double gi = double(g.data[i]);
        const double mi = state.beta1 * double(m.data[i]) + (1.0 - state.beta1) * gi;
        const double vi = state.beta2 * double(v.data[i]) + (1.0 - state.beta2) * gi * gi;
        m.data[i] = T(mi);
        v.data[i] = T(vi);
        w.data[i] = T(double(w.data[i]) - lr * (mi / bc1) / (std::sqrt(vi / bc2) + state.adam_eps));
      }
    }
  }
  ++params.version;
}

// ---------------------------------------------------------------------------
// Weighted MSE (the PER-corrected loss)
// ---------------------------------------------------------------------------

template <typename T>
struct WeightedMseResult {
  double loss;
  TensorT<T> grad;  // dLoss/dPred
};

/// loss = mean(w * (pred - target)^2), grad = 2*w*(pred - target)/N.
template <typename T>
WeightedMseResult<T> weighted_mse(const TensorT<T>& pred, const TensorT<T>& target,
                                  const TensorT<T>& weights) {
  if (!same_shape(pred, target) || !same_shape(pred, weights))
    throw ShapeError("weighted_mse: pred " + shape_str(pred.shape) + ", target " +
                     shape_str(target.shape) + ", weights " + shape_str(weights.shape));
  const double n = double(pred.numel());
  double loss = 0.0;
  TensorT<T> grad(pred.shape);
  for (std::size_t i = 0; i < pred.numel(); ++i) {
    const double e = double(pred.data[i]) - double(target.data[i]);
    const double w = double(weights.data[i]);
    loss += w * e * e;
    grad.data[i] = T(2.0 * w * e / n);
  }
  return {loss / n, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Gradient check (finite-difference oracle)
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double h = 1e-3;
  // Test hook: scales one analytic gradient entry to prove the check catches
  // a wrong gradient. Empty name = no corruption.
  std::string corrupt_key;
  std::size_t corrupt_index = 0;
  double corrupt_scale = 1.0;
};

/// Compares backward() against central finite differences of the scalar loss
/// L = 0.5*sum(output^2), element by element, in double precision (the same
/// templated code path the float models run). Returns the max relative error
/// max|a-n| / max(|a|,|n|,1e-8). Intended for desk-scale nets (< 1e4 params).
template <typename T>
double gradient_check(const NetworkT<T>& net_in, const TensorT<T>& input,
                      const TensorT<T>* aux = nullptr, GradCheckOptions opts = {}) {
  NetworkT<double> net = net_in.template cast<double>();
  TensorT<double> x = input.template cast<double>();
  TensorT<double> a;
  const TensorT<double>* ap = nullptr;
  if (aux) {
    a = aux->template cast<double>();
    ap = &a;
  }

  const auto loss_of = [&](const NetworkT<double>& n) {
    auto [out, tape] = forward(n, x, ap);
    double l = 0.0;
    for (double v : out.data) l += 0.5 * v * v;
    return l;
  };

  auto [out, tape] = forward(net, x, ap);
  GradMapT<double> analytic = backward(net, tape, out);  // dL/dOut = out
  if (!opts.corrupt_key.empty())
    analytic.at(opts.corrupt_key).data.at(opts.corrupt_index) *= opts.corrupt_scale;

  double max_rel = 0.0;
  for (auto& [key, w] : net.weights) {
    for (std::size_t i = 0; i < w.numel(); ++i) {
      const double orig = w.data[i];
      w.data[i] = orig + opts.h;
      const double lp = loss_of(net);
      w.data[i] = orig - opts.h;
      const double lm = loss_of(net);
      w.data[i] = orig;
      const double numeric = (lp - lm) / (2.0 * opts.h);
      const double an = analytic.at(key).data[i];
      const double rel = std::abs(an - numeric) /
                         std::max({std::abs(an), std::abs(numeric), 1e-8});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

template <typename T>
double gradient_check(const NetworkT<T>& net, const TensorT<T>& input, GradCheckOptions opts) {
  return gradient_check(net, input, static_cast<const TensorT<T>*>(nullptr), opts);
}

}  // namespace sdqn
