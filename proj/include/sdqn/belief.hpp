#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <numeric>
#include <vector>

#include "sdqn/checkpoint.hpp"
#include "sdqn/nn.hpp"
#include "sdqn/normalizer.hpp"
#include "sdqn/optim.hpp"
#include "sdqn/world.hpp"

namespace sdqn {

/// Shield/prediction horizon: 8 virtual steps of 1/15 s (>= the nominal 0.5 s
/// window). Shared by the future-location model and the rollout shield.
inline constexpr int kFutureHorizonSteps = 8;
inline constexpr double kFutureHorizonSeconds = kFutureHorizonSteps * kSimDt;

/// Three consecutive noisy observations of one pedestrian: rows t-2dt, t-dt,
/// t. At episode start missing rows are back-filled with the earliest
/// available observation.
struct ObservationWindow {
  std::array<PedestrianView, 3> obs;

  const PedestrianView& newest() const { return obs[2]; }
};

/// Maintains per-pedestrian observation histories during an episode.
class WindowTracker {
 public:
  void push(const std::vector<PedestrianView>& observed) {
    for (const PedestrianView& p : observed) {
      auto it = hist_.find(p.id);
      if (it == hist_.end()) {
        hist_.emplace(p.id, ObservationWindow{{p, p, p}});
      } else {
        auto& w = it->second.obs;
        w[0] = w[1];
        w[1] = w[2];
        w[2] = p;
      }
    }
  }

  const ObservationWindow& window(int id) const { return hist_.at(id); }

  std::vector<ObservationWindow> windows(const std::vector<PedestrianView>& order) const {
    std::vector<ObservationWindow> out;
    out.reserve(order.size());
    for (const PedestrianView& p : order) out.push_back(hist_.at(p.id));
    return out;
  }

  void clear() { hist_.clear(); }

 private:
  std::map<int, ObservationWindow> hist_;
};

// ---------------------------------------------------------------------------
// Analytic baselines
// ---------------------------------------------------------------------------

/// Least-squares constant-velocity extrapolation of the window to
/// t + kFutureHorizonSeconds. Slope from the endpoint difference of the three
/// equally spaced samples, anchored at the newest sample.
inline Vec2 constant_velocity_predict(const ObservationWindow& w) {
  const Vec2 p0 = w.obs[0].pos, p2 = w.obs[2].pos;
  const Vec2 vel = (p2 - p0) * (1.0 / (2.0 * kSimDt));
  return p2 + vel * kFutureHorizonSeconds;
}

/// Least-squares linear fit over the three noisy positions evaluated at t:
/// -p0/6 + p1/3 + 5 p2/6 per axis. The closed-form denoising oracle.
inline Vec2 least_squares_position_at_t(const ObservationWindow& w) {
  const Vec2 p0 = w.obs[0].pos, p1 = w.obs[1].pos, p2 = w.obs[2].pos;
  return p0 * (-1.0 / 6.0) + p1 * (1.0 / 3.0) + p2 * (5.0 / 6.0);
}

// ---------------------------------------------------------------------------
// Pedestrian trajectory dataset (paired clean/noisy walks)
// ---------------------------------------------------------------------------

struct PedestrianDataset {
  int episodes = 0, steps = 0;
  // Row-major [episode][step][4], columns x, y, v, theta.
  std::vector<float> clean, noisy;

  std::size_t row(int e, int t) const { return (std::size_t(e) * steps + t) * 4; }
};

/// One walker per episode roaming the four-way crosswalks; every step records
/// the true state and a noisy observation. Deterministic in the seed.
inline PedestrianDataset collect_pedestrian_dataset(int episodes, int steps,
                                                    std::uint64_t seed,
                                                    const WorldConfig& cfg = {}) {
  const IntersectionLayout layout = IntersectionLayout::four_way();
  PedestrianDataset ds;
  ds.episodes = episodes;
  ds.steps = steps;
  ds.clean.resize(std::size_t(episodes) * steps * 4);
  ds.noisy.resize(std::size_t(episodes) * steps * 4);
  std::normal_distribution<double> npos(0.0, cfg.sigma_pos);
  std::normal_distribution<double> nvel(0.0, cfg.sigma_vel);
  std::normal_distribution<double> nhead(0.0, cfg.sigma_heading);
  for (int e = 0; e < episodes; ++e) {
    Rng rng = make_rng(derive_seed(seed, std::uint64_t(e)));
    Pedestrian p = detail::spawn_pedestrian(layout, rng, cfg, e);
    for (int t = 0; t < steps; ++t) {
      detail::advance_pedestrian(p, layout, rng, cfg, nullptr);
      const std::size_t r = ds.row(e, t);
      ds.clean[r + 0] = float(p.pos.x);
      ds.clean[r + 1] = float(p.pos.y);
      ds.clean[r + 2] = float(p.speed);
      ds.clean[r + 3] = float(p.heading_deg);
      ds.noisy[r + 0] = float(p.pos.x + (cfg.sigma_pos > 0 ? npos(rng) : 0.0));
      ds.noisy[r + 1] = float(p.pos.y + (cfg.sigma_pos > 0 ? npos(rng) : 0.0));
      ds.noisy[r + 2] = float(p.speed + (cfg.sigma_vel > 0 ? nvel(rng) : 0.0));
      ds.noisy[r + 3] =
          float(wrap_deg_360(p.heading_deg + (cfg.sigma_heading > 0 ? nhead(rng) : 0.0)));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Window feature extraction
// ---------------------------------------------------------------------------

inline constexpr std::size_t kWindowFeatDim = 12;  // 3 rows x (dx, dy, v, theta)

/// Features are position deltas relative to the newest noisy sample plus raw
/// speed/heading, which makes the models translation-equivariant by
/// construction (so one intersection's training transfers to another).
inline std::array<float, kWindowFeatDim> window_features(const ObservationWindow& w) {
  std::array<float, kWindowFeatDim> f{};
  const Vec2 anchor = w.obs[2].pos;
  for (std::size_t i = 0; i < 3; ++i) {
    f[i * 4 + 0] = float(w.obs[i].pos.x - anchor.x);
    f[i * 4 + 1] = float(w.obs[i].pos.y - anchor.y);
    f[i * 4 + 2] = float(w.obs[i].speed);
    f[i * 4 + 3] = float(w.obs[i].heading_deg);
  }
  return f;
}

/// Windows + labels assembled from a paired dataset. Labels are stored raw
/// (un-normalized); position labels are deltas from the window anchor.
struct WindowDataset {
  std::size_t n = 0;
  std::vector<float> feats;          // n x 12
  std::vector<float> belief_labels;  // n x 4: dx, dy, v, theta (clean, at t)
  std::vector<float> future_labels;  // n x 2: dx, dy (clean, at t + horizon)
  std::vector<std::uint8_t> has_future;
  std::vector<std::int32_t> episode;
  std::vector<float> anchor;        // n x 2 noisy position at t
  std::vector<float> clean_pos;     // n x 2 true position at t
  std::vector<float> clean_future;  // n x 2 true position at t + horizon
};

inline WindowDataset build_window_dataset(const PedestrianDataset& ds) {
  WindowDataset w;
  const std::size_t total = std::size_t(ds.episodes) * ds.steps;
  w.feats.reserve(total * kWindowFeatDim);
  for (int e = 0; e < ds.episodes; ++e) {
    for (int t = 0; t < ds.steps; ++t) {
      ObservationWindow win;
      for (int i = 0; i < 3; ++i) {
        const int src = std::max(0, t - (2 - i));
        const std::size_t r = ds.row(e, src);
        win.obs[i] = {e,
                      {double(ds.noisy[r]), double(ds.noisy[r + 1])},
                      double(ds.noisy[r + 2]),
                      double(ds.noisy[r + 3])};
      }
      const auto f = window_features(win);
      w.feats.insert(w.feats.end(), f.begin(), f.end());
      const std::size_t rc = ds.row(e, t);
      const float ax = float(win.obs[2].pos.x), ay = float(win.obs[2].pos.y);
      w.belief_labels.push_back(ds.clean[rc] - ax);
      w.belief_labels.push_back(ds.clean[rc + 1] - ay);
      w.belief_labels.push_back(ds.clean[rc + 2]);
      w.belief_labels.push_back(ds.clean[rc + 3]);
      w.anchor.push_back(ax);
      w.anchor.push_back(ay);
      w.clean_pos.push_back(ds.clean[rc]);
      w.clean_pos.push_back(ds.clean[rc + 1]);
      const int tf = t + kFutureHorizonSteps;
      const bool hf = tf < ds.steps;
      w.has_future.push_back(hf ? 1 : 0);
      const std::size_t rf = ds.row(e, hf ? tf : t);
      w.future_labels.push_back(ds.clean[rf] - ax);
      w.future_labels.push_back(ds.clean[rf + 1] - ay);
      w.clean_future.push_back(ds.clean[rf]);
      w.clean_future.push_back(ds.clean[rf + 1]);
      w.episode.push_back(e);
      ++w.n;
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Recurrent regressor training (belief updater & future-location model)
// ---------------------------------------------------------------------------

inline Network make_belief_net(std::uint64_t seed) {
  return NetBuilder({3, 4}).lstm_cell(32).dense(4).build(seed);
}
inline Network make_future_net(std::uint64_t seed) {
  return NetBuilder({3, 4}).lstm_cell(32).dense(2).build(seed);
}

struct RecurrentTrainConfig {
  double lr = 1e-4;  // Adam
  std::size_t batch = 32;
  int max_epochs = 30;
  int patience = 4;
  double holdout_fraction = 0.1;  // split by episode
  std::uint64_t seed = 1;
  // Convergence gates, checked on the held-out split.
  double belief_min_denoise_factor = 1.2;  // vs the raw-noise baseline
  double future_rmse_gate = 0.6;           // metres
  bool enforce_gates = true;
};

struct RegressorMetrics {
  double holdout_rmse = 0.0;    // pooled per-axis position RMSE, metres
  double raw_rmse = 0.0;        // newest-noisy-sample baseline
  double oracle_rmse = 0.0;     // least-squares (belief) / const-velocity (future)
  double baseline_rmse = 0.0;   // predict-current-noisy-position (future)
  int epochs_run = 0;
};

struct TrainedRegressor {
  Network net;
  AffineNormalizer feat_norm, label_norm;
  RegressorMetrics metrics;
};

namespace detail {

struct SplitIdx {
  std::vector<std::size_t> train, val;
};

inline SplitIdx split_by_episode(const WindowDataset& w, int episodes, double holdout,
                                 bool future_only) {
  const int val_start = episodes - std::max(1, int(double(episodes) * holdout));
  SplitIdx s;
  for (std::size_t i = 0; i < w.n; ++i) {
    if (future_only && !w.has_future[i]) continue;
    (w.episode[i] < val_start ? s.train : s.val).push_back(i);
  }
  return s;
}

inline double eval_position_rmse(const Network& net, const WindowDataset& w,
                                 const AffineNormalizer& fn, const AffineNormalizer& ln,
                                 const std::vector<std::size_t>& idx,
                                 const std::vector<float>& truth) {
  double acc = 0.0;
  for (std::size_t i : idx) {
    Tensor in({3, 4});
    for (std::size_t k = 0; k < kWindowFeatDim; ++k)
      in.data[k] = fn.transform1(w.feats[i * kWindowFeatDim + k], k % 4);
    auto [out, tape] = forward(net, in);
    const double px = w.anchor[i * 2] + ln.inverse1(out.data[0], 0);
    const double py = w.anchor[i * 2 + 1] + ln.inverse1(out.data[1], 1);
    const double ex = px - truth[i * 2], ey = py - truth[i * 2 + 1];
    acc += ex * ex + ey * ey;
  }
  return idx.empty() ? 0.0 : std::sqrt(acc / (2.0 * double(idx.size())));
}

inline Network fit_window_regressor(Network net, const WindowDataset& w,
                                    const std::vector<float>& labels, std::size_t ldim,
                                    const AffineNormalizer& fn, const AffineNormalizer& ln,
                                    const SplitIdx& split, const RecurrentTrainConfig& cfg,
                                    int* epochs_out) {
  OptStateT<float> opt;
  Rng rng = make_rng(cfg.seed);
  std::vector<std::size_t> order = split.train;
  std::map<std::string, Tensor> best = net.weights;
  double best_val = std::numeric_limits<double>::max();
  int bad = 0, epoch = 0;

  const auto val_mse = [&] {
    double acc = 0.0;
    for (std::size_t i : split.val) {
      Tensor in({3, 4});
      for (std::size_t k = 0; k < kWindowFeatDim; ++k)
        in.data[k] = fn.transform1(w.feats[i * kWindowFeatDim + k], k % 4);
      auto [out, tape] = forward(net, in);
      for (std::size_t d = 0; d < ldim; ++d) {
        const double e = out.data[d] - ln.transform1(labels[i * ldim + d], d);
        acc += e * e;
      }
    }
    return acc / double(std::max<std::size_t>(1, split.val.size()) * ldim);
  };

  for (; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    GradMapT<float> acc;
    for (const auto& [k, v] : net.weights) acc.emplace(k, Tensor(v.shape));
    Tensor target({ldim}), ones({ldim});
    ones.fill(1.f);
    std::size_t in_batch = 0;
    for (std::size_t i : order) {
      Tensor in({3, 4});
      for (std::size_t k = 0; k < kWindowFeatDim; ++k)
        in.data[k] = fn.transform1(w.feats[i * kWindowFeatDim + k], k % 4);
      auto [out, tape] = forward(net, in);
      for (std::size_t d = 0; d < ldim; ++d)
        target.data[d] = ln.transform1(labels[i * ldim + d], d);
      auto mse = weighted_mse(out, target, ones);
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
    const double v = val_mse();
    if (v < best_val) {
      best_val = v;
      best = net.weights;
      bad = 0;
    } else if (++bad >= cfg.patience) {
      ++epoch;
      break;
    }
  }
  net.weights = std::move(best);
  ++net.version;
  if (epochs_out) *epochs_out = epoch;
  return net;
}

}  // namespace detail

/// Trains the belief updater (noisy window -> denoised current state).
/// Convergence gate: held-out position RMSE must beat the raw-noise baseline
/// by at least the configured factor.
inline TrainedRegressor train_belief_model(const PedestrianDataset& ds,
                                           const RecurrentTrainConfig& cfg = {}) {
  const WindowDataset w = build_window_dataset(ds);
  const auto split = detail::split_by_episode(w, ds.episodes, cfg.holdout_fraction, false);

  TrainedRegressor out;
  std::vector<float> train_feats, train_labels;
  for (std::size_t i : split.train) {
    train_feats.insert(train_feats.end(), w.feats.begin() + i * kWindowFeatDim,
                       w.feats.begin() + (i + 1) * kWindowFeatDim);
    train_labels.insert(train_labels.end(), w.belief_labels.begin() + i * 4,
                        w.belief_labels.begin() + (i + 1) * 4);
  }
  out.feat_norm = AffineNormalizer::fit(train_feats, 4);
  out.label_norm = AffineNormalizer::fit(train_labels, 4);

  out.net = detail::fit_window_regressor(make_belief_net(cfg.seed), w, w.belief_labels, 4,
                                         out.feat_norm, out.label_norm, split, cfg,
                                         &out.metrics.epochs_run);

  out.metrics.holdout_rmse = detail::eval_position_rmse(out.net, w, out.feat_norm,
                                                        out.label_norm, split.val, w.clean_pos);
  double raw = 0.0, ls = 0.0;
  for (std::size_t i : split.val) {
    const double rx = w.anchor[i * 2] - w.clean_pos[i * 2];
    const double ry = w.anchor[i * 2 + 1] - w.clean_pos[i * 2 + 1];
    raw += rx * rx + ry * ry;
    ObservationWindow win;
    for (int k = 0; k < 3; ++k)
      win.obs[k].pos = {double(w.anchor[i * 2] + w.feats[i * kWindowFeatDim + k * 4]),
                        double(w.anchor[i * 2 + 1] + w.feats[i * kWindowFeatDim + k * 4 + 1])};
    const Vec2 est = least_squares_position_at_t(win);
    const double lx = est.x - w.clean_pos[i * 2], ly = est.y - w.clean_pos[i * 2 + 1];
    ls += lx * lx + ly * ly;
  }
  const double nval = 2.0 * double(std::max<std::size_t>(1, split.val.size()));
  out.metrics.raw_rmse = std::sqrt(raw / nval);
  out.metrics.oracle_rmse = std::sqrt(ls / nval);

  if (cfg.enforce_gates &&
      out.metrics.holdout_rmse * cfg.belief_min_denoise_factor > out.metrics.raw_rmse)
    throw ConvergenceError("belief model: held-out RMSE " +
                           std::to_string(out.metrics.holdout_rmse) + " m does not beat raw " +
                           std::to_string(out.metrics.raw_rmse) + " m by factor " +
                           std::to_string(cfg.belief_min_denoise_factor));
  return out;
}

/// Trains the future-location model (noisy window -> position 8 steps ahead).
inline TrainedRegressor train_future_model(const PedestrianDataset& ds,
                                           const RecurrentTrainConfig& cfg = {}) {
  const WindowDataset w = build_window_dataset(ds);
  const auto split = detail::split_by_episode(w, ds.episodes, cfg.holdout_fraction, true);

  TrainedRegressor out;
  std::vector<float> train_feats, train_labels;
  for (std::size_t i : split.train) {
    train_feats.insert(train_feats.end(), w.feats.begin() + i * kWindowFeatDim,
                       w.feats.begin() + (i + 1) * kWindowFeatDim);
    train_labels.insert(train_labels.end(), w.future_labels.begin() + i * 2,
                        w.future_labels.begin() + (i + 1) * 2);
  }
  out.feat_norm = AffineNormalizer::fit(train_feats, 4);
  out.label_norm = AffineNormalizer::fit(train_labels, 2);

  out.net = detail::fit_window_regressor(make_future_net(cfg.seed), w, w.future_labels, 2,
                                         out.feat_norm, out.label_norm, split, cfg,
                                         &out.metrics.epochs_run);

  out.metrics.holdout_rmse = detail::eval_position_rmse(
      out.net, w, out.feat_norm, out.label_norm, split.val, w.clean_future);
  double base = 0.0, cv = 0.0;
  for (std::size_t i : split.val) {
    const double bx = w.anchor[i * 2] - w.clean_future[i * 2];
    const double by = w.anchor[i * 2 + 1] - w.clean_future[i * 2 + 1];
    base += bx * bx + by * by;
    ObservationWindow win;
    for (int k = 0; k < 3; ++k)
      win.obs[k].pos = {double(w.anchor[i * 2] + w.feats[i * kWindowFeatDim + k * 4]),
                        double(w.anchor[i * 2 + 1] + w.feats[i * kWindowFeatDim + k * 4 + 1])};
    const Vec2 est = constant_velocity_predict(win);
    const double cx = est.x - w.clean_future[i * 2], cy = est.y - w.clean_future[i * 2 + 1];
    cv += cx * cx + cy * cy;
  }
  const double nval = 2.0 * double(std::max<std::size_t>(1, split.val.size()));
  out.metrics.baseline_rmse = std::sqrt(base / nval);
  out.metrics.oracle_rmse = std::sqrt(cv / nval);

  if (cfg.enforce_gates && out.metrics.holdout_rmse > cfg.future_rmse_gate)
    throw ConvergenceError("future model: held-out RMSE " +
                           std::to_string(out.metrics.holdout_rmse) + " m exceeds gate " +
                           std::to_string(cfg.future_rmse_gate) + " m");
  return out;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor normalized_window_input(const ObservationWindow& win,
                                      const AffineNormalizer& fn) {
  const auto f = window_features(win);
  Tensor in({3, 4});
  for (std::size_t k = 0; k < kWindowFeatDim; ++k) in.data[k] = fn.transform1(f[k], k % 4);
  return in;
}

}  // namespace detail

/// Denoises one window per pedestrian; outputs are order-preserving.
inline std::vector<PedestrianView> perceive(const TrainedRegressor& model,
                                            const std::vector<ObservationWindow>& windows) {
  std::vector<PedestrianView> out;
  out.reserve(windows.size());
  for (const ObservationWindow& win : windows) {
    for (const auto& o : win.obs)
      if (!std::isfinite(o.pos.x) || !std::isfinite(o.pos.y) || !std::isfinite(o.speed) ||
          !std::isfinite(o.heading_deg))
        throw NonFiniteError("perceive: malformed observation window");
    auto [y, tape] = forward(model.net, detail::normalized_window_input(win, model.feat_norm));
    PedestrianView p;
    p.id = win.newest().id;
    p.pos = {win.newest().pos.x + model.label_norm.inverse1(y.data[0], 0),
             win.newest().pos.y + model.label_norm.inverse1(y.data[1], 1)};
    p.speed = std::max(0.0, double(model.label_norm.inverse1(y.data[2], 2)));
    p.heading_deg = wrap_deg_360(model.label_norm.inverse1(y.data[3], 3));
    out.push_back(p);
  }
  return out;
}

/// Predicted position at t + kFutureHorizonSeconds for one window.
inline Vec2 predict_future(const TrainedRegressor& model, const ObservationWindow& win) {
  auto [y, tape] = forward(model.net, detail::normalized_window_input(win, model.feat_norm));
  return {win.newest().pos.x + model.label_norm.inverse1(y.data[0], 0),
          win.newest().pos.y + model.label_norm.inverse1(y.data[1], 1)};
}

// ---------------------------------------------------------------------------
// Checkpoint round trip
// ---------------------------------------------------------------------------

inline void save_regressor(const std::string& path, const TrainedRegressor& model) {
  std::map<std::string, Tensor> extra;
  extra.emplace("norm/feat_lo", model.feat_norm.lo_tensor());
  extra.emplace("norm/feat_hi", model.feat_norm.hi_tensor());
  extra.emplace("norm/label_lo", model.label_norm.lo_tensor());
  extra.emplace("norm/label_hi", model.label_norm.hi_tensor());
  save_network(path, model.net, extra);
}

inline TrainedRegressor load_regressor(const std::string& path, bool future) {
  TrainedRegressor model;
  model.net = future ? make_future_net(0) : make_belief_net(0);
  auto extra = load_network(path, model.net);
  const auto need = [&](const char* key) -> const Tensor& {
    auto it = extra.find(key);
    if (it == extra.end())
      throw CheckpointError(path + ": missing normalization tensor '" + key + "'");
    return it->second;
  };
  model.feat_norm = AffineNormalizer::from_tensors(need("norm/feat_lo"), need("norm/feat_hi"));
  model.label_norm =
      AffineNormalizer::from_tensors(need("norm/label_lo"), need("norm/label_hi"));
  return model;
}

}  // namespace sdqn
