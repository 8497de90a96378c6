#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdqn/agent.hpp"
#include "sdqn/reward.hpp"
#include "sdqn/shield.hpp"

namespace sdqn {

/// Everything a run needs, assembled from the built-in profile defaults plus
/// `key = value` overrides. See config_keys_help() for the documented keys.
struct RunConfig {
  std::string profile = "desk";  // desk | full
  LayoutKind layout = LayoutKind::kFourWay;
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  WorldConfig world;
  RewardParams reward;
  AgentConfig agent = AgentConfig::desk();
  ShieldConfig shield;
  bool shield_ground_truth = false;
  bool shield_trained_dynamics = false;
  int eval_episodes = 200;
  int eval_workers = 0;  // 0 = hardware concurrency

  std::string belief_path = "belief.sdqn";
  std::string future_path = "future.sdqn";
  std::string dynamics_path = "dynamics.sdqn";
  std::string agent_path;  // default derived from the variant name

  RoiSpec roi() const { return agent.roi(); }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: bad boolean '" + v + "' for " + key);
}

inline double parse_num(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number '" + v + "' for " + key);
  }
}

}  // namespace detail

inline void apply_profile(RunConfig& cfg, const std::string& profile) {
  if (profile == "desk") {
    cfg.agent = AgentConfig::desk();
  } else if (profile == "full") {
    cfg.agent = AgentConfig::full();
  } else {
    throw ConfigError("config: unknown profile '" + profile + "' (desk|full)");
  }
  cfg.profile = profile;
}

/// Applies one key = value pair; unknown keys are config errors.
inline void apply_config_entry(RunConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_num;
  if (key == "profile") {
    apply_profile(cfg, value);
  } else if (key == "layout.kind") {
    if (value == "four-way")
      cfg.layout = LayoutKind::kFourWay;
    else if (value == "three-way")
      cfg.layout = LayoutKind::kThreeWay;
    else
      throw ConfigError("config: unknown layout.kind '" + value + "'");
  } else if (key == "seed") {
    cfg.seed = std::uint64_t(parse_num(value, key));
  } else if (key == "out") {
    cfg.out_dir = value;
  } else if (key == "grid.scale") {
    const double s = parse_num(value, key);
    if (s <= 0 || 80.0 / s != std::floor(80.0 / s))
      throw ConfigError("config: grid.scale must divide the 80x60 grid");
    cfg.agent.grid_rows = std::size_t(80.0 / s);
    cfg.agent.grid_cols = std::size_t(60.0 / s);
  } else if (key == "noise.sigma_pos") {
    cfg.world.sigma_pos = parse_num(value, key);
  } else if (key == "noise.sigma_vel") {
    cfg.world.sigma_vel = parse_num(value, key);
  } else if (key == "noise.sigma_heading") {
    cfg.world.sigma_heading = parse_num(value, key);
  } else if (key.rfind("reward.", 0) == 0) {
    const std::string f = key.substr(7);
    double* slot = f == "d1"   ? &cfg.reward.d1
                   : f == "d2" ? &cfg.reward.d2
                   : f == "d3" ? &cfg.reward.d3
                   : f == "d4" ? &cfg.reward.d4
                   : f == "v1" ? &cfg.reward.v1
                   : f == "v2" ? &cfg.reward.v2
                   : f == "r1" ? &cfg.reward.r1
                   : f == "r2" ? &cfg.reward.r2
                   : f == "r3" ? &cfg.reward.r3
                   : f == "r4" ? &cfg.reward.r4
                   : f == "r5" ? &cfg.reward.r5
                   : f == "r6" ? &cfg.reward.r6
                   : f == "r7" ? &cfg.reward.r7
                              : nullptr;
    if (!slot) throw ConfigError("config: unknown key '" + key + "'");
    *slot = parse_num(value, key);
  } else if (key == "agent.episodes") {
    cfg.agent.episodes = int(parse_num(value, key));
  } else if (key == "agent.eps_decay") {
    cfg.agent.eps_decay = parse_num(value, key);
  } else if (key == "agent.train_every") {
    cfg.agent.train_every = int(parse_num(value, key));
  } else if (key == "agent.filters") {
    cfg.agent.conv_filters = std::size_t(parse_num(value, key));
  } else if (key == "agent.conv_stages") {
    cfg.agent.conv_stages = int(parse_num(value, key));
  } else if (key == "agent.final_relu") {
    cfg.agent.final_relu = parse_bool(value, key);
  } else if (key == "agent.lr") {
    cfg.agent.lr = parse_num(value, key);
  } else if (key == "agent.gamma") {
    cfg.agent.gamma = parse_num(value, key);
  } else if (key == "agent.batch") {
    cfg.agent.batch = std::size_t(parse_num(value, key));
  } else if (key == "agent.learn_start") {
    cfg.agent.learn_start = std::size_t(parse_num(value, key));
  } else if (key == "agent.target_update_every") {
    cfg.agent.target_update_every = long(parse_num(value, key));
  } else if (key == "agent.alpha") {
    cfg.agent.alpha = parse_num(value, key);
  } else if (key == "agent.beta0") {
    cfg.agent.beta0 = parse_num(value, key);
  } else if (key == "agent.buffer") {
    cfg.agent.buffer_capacity = std::size_t(parse_num(value, key));
  } else if (key == "shield.threshold") {
    cfg.shield.distance_threshold = parse_num(value, key);
  } else if (key == "shield.steps") {
    cfg.shield.virtual_steps = int(parse_num(value, key));
  } else if (key == "shield.ground_truth") {
    cfg.shield_ground_truth = parse_bool(value, key);
  } else if (key == "shield.use_trained_dynamics") {
    cfg.shield_trained_dynamics = parse_bool(value, key);
  } else if (key == "eval.episodes") {
    cfg.eval_episodes = int(parse_num(value, key));
  } else if (key == "eval.workers") {
    cfg.eval_workers = int(parse_num(value, key));
  } else if (key == "models.belief") {
    cfg.belief_path = value;
  } else if (key == "models.future") {
    cfg.future_path = value;
  } else if (key == "models.dynamics") {
    cfg.dynamics_path = value;
  } else if (key == "models.agent") {
    cfg.agent_path = value;
  } else {
    throw ConfigError("config: unknown key '" + key + "'");
  }
}

/// Flat `key = value` file; '#' starts a comment, blank lines are skipped.
/// The profile key is applied first so later keys can override its defaults.
inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path + ": cannot open config file");
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto strip = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string trimmed = strip(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    entries.emplace_back(strip(trimmed.substr(0, eq)), strip(trimmed.substr(eq + 1)));
  }
  for (const auto& [k, v] : entries)
    if (k == "profile") apply_profile(base, v);
  for (const auto& [k, v] : entries)
    if (k != "profile") apply_config_entry(base, k, v);
  return base;
}

inline const char* config_keys_help() {
  return
      "profile = desk | full            architecture/training scale preset\n"
      "layout.kind = four-way | three-way\n"
      "seed = <u64>\n"
      "out = <dir>\n"
      "grid.scale = 1 | 2               ROI cell scale (1: 80x60, 2: 40x30)\n"
      "noise.sigma_pos | noise.sigma_vel | noise.sigma_heading\n"
      "reward.d1..d4 | reward.v1 v2 | reward.r1..r7\n"
      "agent.episodes | agent.eps_decay | agent.train_every | agent.filters |\n"
      "agent.conv_stages | agent.final_relu | agent.lr | agent.gamma |\n"
      "agent.batch | agent.learn_start | agent.target_update_every |\n"
      "agent.alpha | agent.beta0 | agent.buffer\n"
      "shield.threshold | shield.steps | shield.ground_truth |\n"
      "shield.use_trained_dynamics\n"
      "eval.episodes | eval.workers\n"
      "models.belief | models.future | models.dynamics | models.agent\n";
}

}  // namespace sdqn
