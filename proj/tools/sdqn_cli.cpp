// Command-line front end: trains the auxiliary models and the DDQN/PER agent,
// evaluates the five agent variants, renders episode traces, and runs a quick
// invariant self-check. Exit codes: 0 ok, 2 usage/config error, 3 failed
// check or convergence gate.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sdqn/config.hpp"
#include "sdqn/harness.hpp"

namespace fs = std::filesystem;
using namespace sdqn;

namespace {

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
  std::string profile;
};

RunConfig assemble_config(const GlobalArgs& g) {
  RunConfig cfg;
  if (!g.profile.empty()) apply_profile(cfg, g.profile);
  if (!g.config_path.empty()) cfg = load_config_file(g.config_path, cfg);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  return cfg;
}

std::shared_ptr<const IntersectionLayout> layout_of(const RunConfig& cfg) {
  return std::make_shared<IntersectionLayout>(IntersectionLayout::of(cfg.layout));
}

EpisodeOptions episode_options(const RunConfig& cfg) {
  EpisodeOptions opts;
  opts.world = cfg.world;
  opts.reward = cfg.reward;
  opts.shield = cfg.shield;
  opts.roi = cfg.roi();
  opts.shield_ground_truth = cfg.shield_ground_truth;
  return opts;
}

struct LoadedModels {
  TrainedRegressor belief, future;
  TrainedDynamics dynamics;
  Network qnet;
  EvalModels views;
};

LoadedModels load_models(const RunConfig& cfg, AgentVariant variant, bool need_qnet) {
  LoadedModels m;
  if (uses_belief(variant)) {
    if (!fs::exists(cfg.belief_path))
      throw MissingModelError("missing belief model checkpoint: " + cfg.belief_path);
    m.belief = load_regressor(cfg.belief_path, false);
    m.views.belief = &m.belief;
  }
  if (uses_shield(variant)) {
    if (!fs::exists(cfg.future_path))
      throw MissingModelError("missing future-location model checkpoint: " + cfg.future_path);
    m.future = load_regressor(cfg.future_path, true);
    m.views.future = &m.future;
    if (cfg.shield_trained_dynamics) {
      if (!fs::exists(cfg.dynamics_path))
        throw MissingModelError("missing dynamics model checkpoint: " + cfg.dynamics_path);
      m.dynamics = load_dynamics(cfg.dynamics_path);
      m.views.dynamics = &m.dynamics;
    }
  }
  if (need_qnet && uses_qnet(variant)) {
    const std::string path = cfg.agent_path.empty()
                                 ? cfg.out_dir + "/agent_" + variant_name(variant) + ".sdqn"
                                 : cfg.agent_path;
    if (!fs::exists(path))
      throw MissingModelError("missing agent Q-net checkpoint: " + path);
    m.qnet = make_q_net(cfg.agent, 0);
    load_network(path, m.qnet);
    m.views.qnet = &m.qnet;
  }
  return m;
}

void print_table(const std::vector<TableRow>& rows) {
  std::printf("%-20s %9s %11s %9s %10s %12s %11s %10s\n", "variant", "success%",
              "collision%", "timeout%", "speeding%", "crossing(s)", "speed(m/s)",
              "dist(m)");
  for (const TableRow& r : rows)
    std::printf("%-20s %9.1f %11.1f %9.1f %10.1f %12.2f %11.2f %10.2f\n",
                r.variant.c_str(), r.success_pct, r.collision_pct, r.timeout_pct,
                r.violation_pct, r.avg_crossing_time, r.avg_speed, r.avg_distance);
}

int cmd_dynamics_fit(const RunConfig& cfg, int episodes, int steps) {
  const auto layout = layout_of(cfg);
  std::printf("collecting dynamics dataset: %d episodes x %d steps\n", episodes, steps);
  const auto ds = collect_dynamics_dataset(episodes, steps, cfg.seed, *layout, cfg.world);
  DynamicsTrainConfig tc;
  tc.seed = derive_seed(cfg.seed, 7);
  const TrainedDynamics model = fit_dynamics_model(ds, tc);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + "/dynamics.sdqn";
  save_dynamics(path, model);
  std::printf("dynamics model: held-out speed RMSE %.4f m/s, position error %.4f m -> %s\n",
              model.holdout_speed_rmse, model.holdout_pos_err, path.c_str());
  return 0;
}

void write_pedestrian_csv(const PedestrianDataset& ds, const std::string& path) {
  std::string out =
      "episode,step,clean_x,clean_y,clean_v,clean_th,noisy_x,noisy_y,noisy_v,noisy_th\n";
  for (int e = 0; e < ds.episodes; ++e)
    for (int t = 0; t < ds.steps; ++t) {
      const std::size_t r = ds.row(e, t);
      out += csv_join({num_str(e), num_str(t), num_str(double(ds.clean[r])),
                       num_str(double(ds.clean[r + 1])), num_str(double(ds.clean[r + 2])),
                       num_str(double(ds.clean[r + 3])), num_str(double(ds.noisy[r])),
                       num_str(double(ds.noisy[r + 1])), num_str(double(ds.noisy[r + 2])),
                       num_str(double(ds.noisy[r + 3]))});
    }
  write_text_file(path, out);
}

int cmd_recurrent_train(const RunConfig& cfg, bool future, int episodes, int steps,
                        const std::string& csv_path) {
  std::printf("collecting pedestrian dataset: %d episodes x %d steps\n", episodes, steps);
  const auto ds = collect_pedestrian_dataset(episodes, steps, cfg.seed, cfg.world);
  if (!csv_path.empty()) {
    write_pedestrian_csv(ds, csv_path);
    std::printf("dataset CSV -> %s\n", csv_path.c_str());
  }
  RecurrentTrainConfig tc;
  tc.seed = derive_seed(cfg.seed, future ? 11 : 13);
  const TrainedRegressor model = future ? train_future_model(ds, tc) : train_belief_model(ds, tc);
  fs::create_directories(cfg.out_dir);
  const std::string path = cfg.out_dir + (future ? "/future.sdqn" : "/belief.sdqn");
  save_regressor(path, model);
  if (future) {
    std::printf("future model: held-out RMSE %.4f m (baseline %.4f m) -> %s\n",
                model.metrics.holdout_rmse, model.metrics.baseline_rmse, path.c_str());
  } else {
    std::printf(
        "belief model: held-out RMSE %.4f m (raw %.4f m, LS oracle %.4f m) -> %s\n",
        model.metrics.holdout_rmse, model.metrics.raw_rmse, model.metrics.oracle_rmse,
        path.c_str());
  }
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& variant_str) {
  const AgentVariant variant = variant_from_name(variant_str);
  const auto layout = layout_of(cfg);
  LoadedModels models = load_models(cfg, variant, /*need_qnet=*/false);
  fs::create_directories(cfg.out_dir);
  std::printf("training %s for %d episodes (grid %zux%zu, %zu filters)\n",
              variant_name(variant), cfg.agent.episodes, cfg.agent.grid_rows,
              cfg.agent.grid_cols, cfg.agent.conv_filters);
  const TrainResult result = train_variant(
      variant, layout, models.views, cfg.agent, cfg.seed, episode_options(cfg), cfg.out_dir,
      [](const TrainEpisodeLog& row) {
        if ((row.episode + 1) % 10 == 0)
          std::printf("  ep %4d  steps %4d  return %8.3f  eps %.3f  outcome %s\n",
                      row.episode + 1, row.steps, row.episode_return, row.epsilon,
                      outcome_name(row.outcome));
      });
  const std::string qpath = cfg.out_dir + "/agent_" + variant_name(variant) + ".sdqn";
  save_network(qpath, result.qnet);
  write_text_file(cfg.out_dir + "/train_log_" + variant_name(variant) + ".csv",
                  train_log_csv(result.log));
  std::printf("agent -> %s\n", qpath.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& variant_str, int episodes) {
  const AgentVariant variant = variant_from_name(variant_str);
  const auto layout = layout_of(cfg);
  LoadedModels models = load_models(cfg, variant, /*need_qnet=*/true);
  const ExperimentResult res =
      run_experiment(variant, layout, models.views, episodes, cfg.seed, episode_options(cfg),
                     true, cfg.eval_workers);
  fs::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/metrics.csv",
                  metrics_csv_header() + metrics_csv_row(res.row));
  write_text_file(cfg.out_dir + "/episodes.jsonl", res.jsonl);
  print_table({res.row});
  std::printf("metrics -> %s/metrics.csv, traces -> %s/episodes.jsonl\n",
              cfg.out_dir.c_str(), cfg.out_dir.c_str());
  return 0;
}

int cmd_render(const RunConfig& cfg, const std::string& trace_path, int episode) {
  std::ifstream is(trace_path);
  if (!is) throw ConfigError(trace_path + ": cannot open trace");
  const auto layout = layout_of(cfg);
  SceneRenderer renderer(*layout);
  const std::string dir = cfg.out_dir + "/frames/ep" + std::to_string(episode);
  fs::create_directories(dir);
  std::string line;
  int frames = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line);
    if (row.value("type", "") != "step" || row.value("episode", -1) != episode) continue;
    EgoState ego;
    ego.pos = {row.at("ego_x").get<double>(), row.at("ego_y").get<double>()};
    ego.heading_deg = row.at("ego_heading").get<double>();
    std::vector<Pedestrian> peds;
    for (const auto& p : row.at("peds")) {
      Pedestrian ped;
      ped.id = p.at(0).get<int>();
      ped.pos = {p.at(1).get<double>(), p.at(2).get<double>()};
      peds.push_back(ped);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "/%05d.ppm", row.at("step").get<int>());
    renderer.render(ego, peds).save_ppm(dir + name);
    ++frames;
  }
  if (frames == 0) throw ConfigError("no step records for episode " + std::to_string(episode));
  std::printf("rendered %d frames -> %s\n", frames, dir.c_str());
  return 0;
}

int cmd_selfcheck(const RunConfig& cfg) {
  int failures = 0;
  const auto check = [&](const char* name, bool ok) {
    std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };

  {  // gradient correctness on small nets
    Rng rng = make_rng(1);
    std::uniform_real_distribution<float> dist(-1.f, 1.f);
    NetBuilder b({2, 6, 5}, 1);
    b.conv2d(3).relu().avgpool2d(3, 3, 2, 2).flatten().concat_aux().dense(8).relu().dense(2);
    Network conv_net = b.build(3);
    Tensor in({2, 6, 5});
    for (auto& v : in.data) v = dist(rng);
    Tensor aux({1});
    aux.data[0] = dist(rng);
    check("gradient check: conv/pool/dense", gradient_check(conv_net, in, &aux) < 1e-4);
    Network lstm_net = NetBuilder({3, 4}).lstm_cell(8).dense(2).build(4);
    Tensor seq({3, 4});
    for (auto& v : seq.data) v = dist(rng);
    check("gradient check: lstm cell", gradient_check(lstm_net, seq) < 1e-4);
  }
  {  // adam hand value
    Network net = NetBuilder({1}).dense(1).build(1);
    net.weights.at("fc1.w").data[0] = 0.f;
    net.weights.at("fc1.b").data[0] = 0.f;
    GradMap g;
    g.emplace("fc1.w", Tensor({1, 1}, {1.f}));
    g.emplace("fc1.b", Tensor({1}, {0.f}));
    OptState st;
    optimizer_step(OptKind::kAdam, net, g, 0.1, st);
    check("adam first step", std::abs(net.weights.at("fc1.w").data[0] + 0.1f) < 1e-6f);
  }
  {  // PER formulas
    const auto p = sample_probability({1.0, 1.0, 2.0}, 2.0);
    const auto w = importance_weights({0.75, 0.25}, 2, 1.0);
    check("PER sampling distribution",
          std::abs(p[2] - 4.0 / 6.0) < 1e-12 && std::abs(p[0] - 1.0 / 6.0) < 1e-12);
    check("PER importance weights",
          std::abs(w[0] - 1.0 / 3.0) < 1e-9 && std::abs(w[1] - 1.0) < 1e-9);
    SumTreeBuffer buf(64, 0.6);
    Rng rng = make_rng(5);
    std::uniform_real_distribution<double> pr(0.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
      Transition t;
      t.state = Tensor({1});
      t.next_state = Tensor({1});
      buf.push(std::move(t));
      std::uniform_int_distribution<std::size_t> pick(0, buf.size() - 1);
      buf.update_priority(pick(rng), pr(rng));
    }
    check("sum-tree consistency", buf.tree_consistent());
  }
  {  // DDQN decoupling
    const Tensor qo = Tensor::from_values({0.2f, 0.5f, 0.1f, 0.0f});
    const Tensor qt = Tensor::from_values({1.0f, 2.0f, 9.9f, 0.0f});
    check("ddqn target decoupling",
          std::abs(ddqn_target(1.0, qo, qt, false, 0.95) - 2.9) < 1e-6);
  }
  {  // encoder anchor + invariance
    EgoState ego;
    ego.pos = {3.0, -5.0};
    ego.heading_deg = 37.0;
    const auto cell = world_to_cell(ego.pos, ego);
    check("encoder anchor cell", cell && cell->row == 64 && cell->col == 30);
    bool invariant = true;
    Rng rng = make_rng(7);
    std::uniform_real_distribution<double> coord(-10.0, 10.0);
    std::uniform_real_distribution<double> ang(0.0, 360.0);
    for (int trial = 0; trial < 50 && invariant; ++trial) {
      EgoState e;
      e.pos = {coord(rng), coord(rng)};
      e.heading_deg = ang(rng);
      e.speed = 2.0;
      std::vector<PedestrianView> peds;
      for (int i = 0; i < 5; ++i)
        peds.push_back({i, {coord(rng), coord(rng)}, 1.0, ang(rng)});
      const StateTensor base = encode_state_tensor(peds, e);
      const double phi = ang(rng);
      const Vec2 center{coord(rng), coord(rng)};
      EgoState moved = e;
      moved.pos = center + (e.pos - center).rotated(phi);
      moved.heading_deg = e.heading_deg + phi;
      std::vector<PedestrianView> moved_peds = peds;
      for (auto& p : moved_peds) {
        p.pos = center + (p.pos - center).rotated(phi);
        p.heading_deg += phi;
      }
      invariant = encode_state_tensor(moved_peds, moved).grid.data == base.grid.data;
    }
    check("encoder frame invariance (50 transforms)", invariant);
  }
  {  // shield oracle agreement on constant-velocity scenes
    const auto layout = IntersectionLayout::four_way();
    Rng rng = make_rng(11);
    std::uniform_real_distribution<double> s_dist(0.0, layout.ego_route.total_length() * 0.9);
    std::uniform_real_distribution<double> v_dist(0.0, 12.0);
    std::uniform_real_distribution<double> off(-8.0, 8.0);
    std::uniform_real_distribution<double> pv(-1.8, 1.8);
    ShieldConfig scfg;
    bool agree = true;
    for (int scene = 0; scene < 300 && agree; ++scene) {
      EgoState ego;
      ego.route_s = s_dist(rng);
      ego.speed = v_dist(rng);
      ego.pos = layout.ego_route.point_at(ego.route_s);
      ego.heading_deg = layout.ego_route.tangent_deg_at(ego.route_s);
      std::vector<ObservationWindow> windows;
      std::vector<Vec2> pos, vel;
      for (int i = 0; i < 4; ++i) {
        const Vec2 p = ego.pos + Vec2{off(rng), off(rng)};
        const Vec2 v{pv(rng), pv(rng)};
        pos.push_back(p);
        vel.push_back(v);
        ObservationWindow w;
        const double speed = v.norm();
        const double heading = wrap_deg_360(rad_to_deg(std::atan2(v.y, v.x)));
        w.obs[0] = {i, p - v * (2 * kSimDt), speed, heading};
        w.obs[1] = {i, p - v * kSimDt, speed, heading};
        w.obs[2] = {i, p, speed, heading};
        windows.push_back(w);
      }
      const auto ego_traj = rollout_ego(ego, 0.2, layout.ego_route, scfg);
      const auto fast = predicts_collision(ego_traj, rollout_pedestrians_cv(windows, scfg), scfg);
      bool truth = false;
      for (int k = 1; k <= scfg.virtual_steps && !truth; ++k) {
        const OrientedRect fp = ego_traj[std::size_t(k - 1)].footprint();
        for (std::size_t p = 0; p < pos.size() && !truth; ++p)
          truth = fp.distance_to(pos[p] + vel[p] * (double(k) * kSimDt)) <
                  scfg.distance_threshold;
      }
      agree = fast.collision == truth;
    }
    check("shield oracle equivalence (300 scenes)", agree);
  }
  {  // checkpoint round trip
    Network net = NetBuilder({4}).dense(8).relu().dense(3).build(0xFEED);
    const std::string a = cfg.out_dir + "/selfcheck_a.sdqn";
    const std::string b = cfg.out_dir + "/selfcheck_b.sdqn";
    fs::create_directories(cfg.out_dir);
    save_network(a, net);
    Network re = NetBuilder({4}).dense(8).relu().dense(3).build(1);
    load_network(a, re);
    save_network(b, re);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    check("checkpoint byte-exact round trip", !ba.empty() && ba == bb);
    fs::remove(a);
    fs::remove(b);
  }
  {  // epsilon schedule
    check("epsilon schedule", epsilon_schedule(0) == 1.0 && epsilon_schedule(500) == 0.05 &&
                                  std::abs(epsilon_schedule(100) - std::pow(0.99, 100)) < 1e-12);
  }
  std::printf(failures == 0 ? "selfcheck: all checks passed\n"
                            : "selfcheck: %d check(s) FAILED\n",
              failures);
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Safe DDQN/PER left-turn agent: simulator, belief models, rollout shield, "
      "training and evaluation harness"};
  app.footer(std::string("Config file keys (key = value):\n") + config_keys_help());

  GlobalArgs g;
  app.fallthrough(true);  // global flags may follow the subcommand
  app.add_option("--config", g.config_path, "key = value config file");
  auto* seed_opt = app.add_option("--seed", g.seed, "base seed (overrides config)");
  app.add_option("--out", g.out_dir, "output directory (overrides config)");
  app.add_option("--profile", g.profile, "desk | full (default desk)");
  app.require_subcommand(1);

  int episodes = -1, steps = -1, render_episode = 0;
  std::string variant = "srl", csv_path, trace_path;

  auto* dyn = app.add_subcommand("dynamics-fit", "collect ego transitions, fit the dynamics net");
  dyn->add_option("--episodes", episodes, "collection episodes (default 2000)");
  dyn->add_option("--steps", steps, "steps per episode (default 100)");

  auto* belief = app.add_subcommand("belief-train", "train the belief update model");
  belief->add_option("--episodes", episodes, "collection episodes (default 2000)");
  belief->add_option("--steps", steps, "steps per episode (default 400)");
  belief->add_option("--csv", csv_path, "also dump the paired dataset as CSV");

  auto* future = app.add_subcommand("future-train", "train the future-location model");
  future->add_option("--episodes", episodes, "collection episodes (default 2000)");
  future->add_option("--steps", steps, "steps per episode (default 400)");
  future->add_option("--csv", csv_path, "also dump the paired dataset as CSV");

  auto* train = app.add_subcommand("train", "train the DDQN/PER agent for one variant");
  train->add_option("--variant", variant, "rl | belief-update | collision-detector | srl");
  train->add_option("--episodes", episodes, "training episodes (overrides profile)");

  auto* eval = app.add_subcommand("eval", "evaluate a variant over seeded episodes");
  eval->add_option("--variant", variant, "rule-based | rl | belief-update | collision-detector | srl");
  std::string layout_str;
  eval->add_option("--layout", layout_str, "four-way | three-way");
  eval->add_option("--episodes", episodes, "evaluation episodes (default from config)");

  auto* render = app.add_subcommand("render", "draw PPM frames from an episode trace");
  render->add_option("--episode-trace", trace_path, "episodes.jsonl path")->required();
  render->add_option("--episode", render_episode, "episode index (default 0)");

  app.add_subcommand("selfcheck", "run the quick invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    g.seed_set = seed_opt->count() > 0;
    RunConfig cfg = assemble_config(g);
    if (app.got_subcommand("dynamics-fit"))
      return cmd_dynamics_fit(cfg, episodes > 0 ? episodes : 2000, steps > 0 ? steps : 100);
    if (app.got_subcommand("belief-train"))
      return cmd_recurrent_train(cfg, false, episodes > 0 ? episodes : 2000,
                                 steps > 0 ? steps : 400, csv_path);
    if (app.got_subcommand("future-train"))
      return cmd_recurrent_train(cfg, true, episodes > 0 ? episodes : 2000,
                                 steps > 0 ? steps : 400, csv_path);
    if (app.got_subcommand("train")) {
      if (episodes > 0) cfg.agent.episodes = episodes;
      return cmd_train(cfg, variant);
    }
    if (app.got_subcommand("eval")) {
      if (!layout_str.empty())
        apply_config_entry(cfg, "layout.kind", layout_str);
      return cmd_eval(cfg, variant, episodes > 0 ? episodes : cfg.eval_episodes);
    }
    if (app.got_subcommand("render")) return cmd_render(cfg, trace_path, render_episode);
    if (app.got_subcommand("selfcheck")) return cmd_selfcheck(cfg);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const MissingModelError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
