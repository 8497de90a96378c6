#pragma once

#include <vector>

#include "sdqn/checkpoint.hpp"
#include "sdqn/normalizer.hpp"
#include "sdqn/optim.hpp"
#include "sdqn/world.hpp"

namespace sdqn {

// ---------------------------------------------------------------------------
// Ego dynamics dataset: random-throttle rollouts along the route.
// Inputs (throttle, x, y, speed, curvature-at-s); targets next (x, y, speed).
// The signed route curvature stands in for a steering-wheel reading, since
// steering is path-locked here.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDynInDim = 5;
inline constexpr std::size_t kDynOutDim = 3;

struct DynamicsDataset {
  std::size_t n = 0;
  std::vector<float> inputs;   // n x 5
  std::vector<float> targets;  // n x 3
};

inline DynamicsDataset collect_dynamics_dataset(int episodes, int steps, std::uint64_t seed,
                                                const IntersectionLayout& layout,
                                                const WorldConfig& cfg = {}) {
  DynamicsDataset ds;
  ds.inputs.reserve(std::size_t(episodes) * steps * kDynInDim);
  ds.targets.reserve(std::size_t(episodes) * steps * kDynOutDim);
  const Polyline& route = layout.ego_route;
  for (int e = 0; e < episodes; ++e) {
    Rng rng = make_rng(derive_seed(seed, std::uint64_t(e)));
    std::uniform_real_distribution<double> srange(0.0, 0.8 * route.total_length());
    std::uniform_real_distribution<double> vrange(0.0, cfg.speed_cap);
    std::uniform_real_distribution<double> trange(-1.0, 1.0);
    EgoState ego;
    ego.route_s = srange(rng);
    ego.speed = vrange(rng);
    ego.pos = route.point_at(ego.route_s);
    ego.heading_deg = route.tangent_deg_at(ego.route_s);
    for (int t = 0; t < steps; ++t) {
      const double throttle = trange(rng);
      const EgoState next = ego_dynamics_step(ego, throttle, route, cfg);
      ds.inputs.push_back(float(throttle));
      ds.inputs.push_back(float(ego.pos.x));
      ds.inputs.push_back(float(ego.pos.y));
      ds.inputs.push_back(float(ego.speed));
      ds.inputs.push_back(float(route.curvature_at(ego.route_s)));
      ds.targets.push_back(float(next.pos.x));
      ds.targets.push_back(float(next.pos.y));
      ds.targets.push_back(float(next.speed));
      ego = next;
      ++ds.n;
    }
  }
  return ds;
}

inline Network make_dynamics_net(std::uint64_t seed) {
  return NetBuilder({kDynInDim})
      .dense(32)
      .relu()
      .dense(32)
      .relu()
      .dense(16)
      .relu()
      .dense(kDynOutDim)
      .build(seed);
}

struct DynamicsTrainConfig {
  double lr = 1e-4;  // Adam
  std::size_t batch = 32;
  int max_epochs = 100;
  int patience = 10;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
  double speed_rmse_gate = 0.05;  // m/s, held out
  bool enforce_gate = true;
};

struct TrainedDynamics {
  Network net;
  AffineNormalizer in_norm, out_norm;
  double holdout_speed_rmse = 0.0;
  double holdout_pos_err = 0.0;  // mean Euclidean error, metres
  int epochs_run = 0;

  struct Prediction {
    Vec2 pos;
    double speed;
  };

  Prediction predict(double throttle, Vec2 pos, double speed, double curvature) const {
    Tensor in({kDynInDim});
    const float raw[kDynInDim] = {float(throttle), float(pos.x), float(pos.y), float(speed),
                                  float(curvature)};
    for (std::size_t i = 0; i < kDynInDim; ++i) in.data[i] = in_norm.transform1(raw[i], i);
    auto [out, tape] = forward(net, in);
    return {{double(out_norm.inverse1(out.data[0], 0)),
             double(out_norm.inverse1(out.data[1], 1))},
            double(out_norm.inverse1(out.data[2], 2))};
  }
};

/// Supervised fit of the ego transition function. Gate: held-out speed RMSE
/// under 0.05 m/s (the analytic reference is piecewise linear, so the bar is
/// reachable); throws ConvergenceError otherwise.
inline TrainedDynamics fit_dynamics_model(const DynamicsDataset& ds,
                                          const DynamicsTrainConfig& cfg = {}) {
  TrainedDynamics out;
  const std::size_t val_start = ds.n - std::max<std::size_t>(1, std::size_t(double(ds.n) * cfg.holdout_fraction));

  std::vector<float> train_in(ds.inputs.begin(),
                              ds.inputs.begin() + val_start * kDynInDim);
  std::vector<float> train_out(ds.targets.begin(),
                               ds.targets.begin() + val_start * kDynOutDim);
  out.in_norm = AffineNormalizer::fit(train_in, kDynInDim);
  out.out_norm = AffineNormalizer::fit(train_out, kDynOutDim);

  Network net = make_dynamics_net(cfg.seed);
  OptStateT<float> opt;
  Rng rng = make_rng(cfg.seed);
  std::vector<std::size_t> order(val_start);
  std::iota(order.begin(), order.end(), 0);

  const auto fill_input = [&](Tensor& in, std::size_t i) {
    for (std::size_t k = 0; k < kDynInDim; ++k)
      in.data[k] = out.in_norm.transform1(ds.inputs[i * kDynInDim + k], k);
  };

  const auto val_mse = [&] {
    double acc = 0.0;
    Tensor in({kDynInDim});
    for (std::size_t i = val_start; i < ds.n; ++i) {
      fill_input(in, i);
      auto [y, tape] = forward(net, in);
      for (std::size_t d = 0; d < kDynOutDim; ++d) {
        const double e = y.data[d] - out.out_norm.transform1(ds.targets[i * kDynOutDim + d], d);
        acc += e * e;
      }
    }
    return acc / double((ds.n - val_start) * kDynOutDim);
  };

  std::map<std::string, Tensor> best = net.weights;
  double best_val = std::numeric_limits<double>::max();
  int bad = 0;
  Tensor ones({kDynOutDim});
  ones.fill(1.f);
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    GradMapT<float> acc;
    for (const auto& [k, v] : net.weights) acc.emplace(k, Tensor(v.shape));
    Tensor in({kDynInDim}), target({kDynOutDim});
    std::size_t in_batch = 0;
    for (std::size_t i : order) {
      fill_input(in, i);
      auto [y, tape] = forward(net, in);
      for (std::size_t d = 0; d < kDynOutDim; ++d)
        target.data[d] = out.out_norm.transform1(ds.targets[i * kDynOutDim + d], d);
      auto mse = weighted_mse(y, target, ones);
      GradMapT<float> g = backward(net, tape, mse.grad);
      for (auto& [k, t] : acc) {
        const Tensor& src = g.at(k);
        for (std::size_t z = 0; z < t.numel(); ++z) t.data[z] += src.data[z];
      }
      if (++in_batch == cfg.batch) {
        for (auto& [k, t] : acc)
          for (auto& v : t.data) v /= float(cfg.batch);
        optimizer_step(OptKind::kAdam, net, acc, cfg.lr, opt);
        for (auto& [k, t] : acc) t.fill(0.f);
        in_batch = 0;
      }
    }
    out.epochs_run = epoch + 1;
    const double v = val_mse();
    if (v < best_val) {
      best_val = v;
      best = net.weights;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      break;
    }
  }
  net.weights = std::move(best);
  ++net.version;
  out.net = std::move(net);

  // Held-out gates in physical units.
  double sp_acc = 0.0, pos_acc = 0.0;
  for (std::size_t i = val_start; i < ds.n; ++i) {
    const auto pred = out.predict(ds.inputs[i * kDynInDim],
                                  {double(ds.inputs[i * kDynInDim + 1]), double(ds.inputs[i * kDynInDim + 2])},
                                  ds.inputs[i * kDynInDim + 3], ds.inputs[i * kDynInDim + 4]);
    const double es = pred.speed - ds.targets[i * kDynOutDim + 2];
    sp_acc += es * es;
    pos_acc += std::hypot(pred.pos.x - ds.targets[i * kDynOutDim],
                          pred.pos.y - ds.targets[i * kDynOutDim + 1]);
  }
  const double nv = double(ds.n - val_start);
  out.holdout_speed_rmse = std::sqrt(sp_acc / nv);
  out.holdout_pos_err = pos_acc / nv;
  if (cfg.enforce_gate && out.holdout_speed_rmse >= cfg.speed_rmse_gate)
    throw ConvergenceError("dynamics model: held-out speed RMSE " +
                           std::to_string(out.holdout_speed_rmse) + " m/s fails the " +
                           std::to_string(cfg.speed_rmse_gate) + " m/s gate");
  return out;
}

inline void save_dynamics(const std::string& path, const TrainedDynamics& model) {
  std::map<std::string, Tensor> extra;
  extra.emplace("norm/in_lo", model.in_norm.lo_tensor());
  extra.emplace("norm/in_hi", model.in_norm.hi_tensor());
  extra.emplace("norm/out_lo", model.out_norm.lo_tensor());
  extra.emplace("norm/out_hi", model.out_norm.hi_tensor());
  save_network(path, model.net, extra);
}

inline TrainedDynamics load_dynamics(const std::string& path) {
  TrainedDynamics model;
  model.net = make_dynamics_net(0);
  auto extra = load_network(path, model.net);
  const auto need = [&](const char* key) -> const Tensor& {
    auto it = extra.find(key);
    if (it == extra.end())
      throw CheckpointError(path + ": missing normalization tensor '" + key + "'");
    return it->second;
  };
  model.in_norm = AffineNormalizer::from_tensors(need("norm/in_lo"), need("norm/in_hi"));
  model.out_norm = AffineNormalizer::from_tensors(need("norm/out_lo"), need("norm/out_hi"));
  return model;
}

}  // namespace sdqn
