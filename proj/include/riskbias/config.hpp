// Copyright 2026 The riskbias Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "riskbias/biaser.hpp"
#include "riskbias/cvae.hpp"
#include "riskbias/errors.hpp"
#include "riskbias/experiments.hpp"
#include "riskbias/planner.hpp"
#include "riskbias/sim.hpp"

namespace riskbias {

/// Experiment-suite settings shared by the evaluation subcommands.
struct ExperimentSettings {
  int train_scenes = 20000;
  int val_scenes = 500;
  std::vector<double> sigmas = {0.0, 0.3, 0.5, 0.8, 0.95, 1.0};
  int k_min = 16;
  int risk_k = 4;
  int ref_samples = 4096;
  std::vector<double> risk_sigmas = {0.95};
  std::vector<int> risk_ks = {1, 2, 4, 8, 16};
  int episodes = 100;
  std::vector<double> planning_sigmas = {0.8, 0.95};
  std::vector<int> planning_ks = {1, 2, 4, 16, 64};
  int neutral_k = 64;
  double test_speed_scale = 1.0;

  friend bool operator==(const ExperimentSettings&, const ExperimentSettings&) = default;
};

struct PlannerSettings {
  CemConfig cem;
  double desired_speed = 14.0;
  double tracking_weight = 1e-5;
};

/// File locations. Every entry is relative to output_dir, which keeps all
/// writes inside it.
struct PathSettings {
  std::string output_dir = "out";
  std::string train_data = "train.rbs";
  std::string val_data = "val.rbs";
  std::string cvae = "cvae.ckpt";
  std::string biaser = "biaser.ckpt";
  std::string planning_train_data = "planning_train.rbs";
  std::string planning_cvae = "planning_cvae.ckpt";
  std::string planning_biaser = "planning_biaser.ckpt";

  std::filesystem::path resolve(const std::string& rel) const {
    return std::filesystem::path(output_dir) / rel;
  }
};

struct RunConfig {
  std::uint64_t seed = 0;
  SimConfig sim;
  TtcParams ttc;
  CvaeTrainConfig cvae;
  BiasTrainConfig biaser;
  PlannerSettings planner;
  ExperimentSettings experiments;
  PathSettings paths;

  void validate() const;
};

namespace detail {

struct ConfigField {
  std::function<void(RunConfig&, const std::string& raw)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] inline void bad_value(const std::string& type, const std::string& raw) {
  throw ConfigError("expected " + type + ", got '" + raw + "'");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value("a number", raw);
  return v;
}

inline long long parse_int(const std::string& raw) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value("an integer", raw);
  return v;
}

inline bool parse_bool(const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true") return true;
  if (s == "false") return false;
  bad_value("true or false", raw);
}

inline std::string parse_string(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') bad_value("a quoted string", raw);
  const std::string inner = s.substr(1, s.size() - 2);
  if (inner.find('"') != std::string::npos) bad_value("a quoted string", raw);
  return inner;
}

inline std::vector<std::string> split_list(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') bad_value("a [list]", raw);
  std::vector<std::string> out;
  const std::string inner = trim(s.substr(1, s.size() - 2));
  if (inner.empty()) return out;
  std::stringstream ss(inner);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

inline std::string fmt_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, p);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ", ";
    if constexpr (std::is_floating_point_v<T>) s += fmt_double(v[i]);
    else s += std::to_string(v[i]);
  }
  return s + "]";
}

template <typename Get>
ConfigField double_field(Get g) {
  return {[g](RunConfig& c, const std::string& r) { g(c) = parse_double(r); },
          [g](const RunConfig& c) { return fmt_double(g(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
ConfigField int_field(Get g) {
  return {[g](RunConfig& c, const std::string& r) {
            const long long v = parse_int(r);
            if (v < INT32_MIN || v > INT32_MAX) bad_value("a 32-bit integer", r);
            g(c) = static_cast<int>(v);
          },
          [g](const RunConfig& c) { return std::to_string(g(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
ConfigField bool_field(Get g) {
  return {[g](RunConfig& c, const std::string& r) { g(c) = parse_bool(r); },
          [g](const RunConfig& c) { return std::string(g(const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

template <typename Get>
ConfigField string_field(Get g) {
  return {[g](RunConfig& c, const std::string& r) { g(c) = parse_string(r); },
          [g](const RunConfig& c) { return "\"" + g(const_cast<RunConfig&>(c)) + "\""; }};
}

template <typename Get>
ConfigField double_list_field(Get g) {
  return {[g](RunConfig& c, const std::string& r) {
            std::vector<double> v;
            for (const auto& item : split_list(r)) v.push_back(parse_double(item));
            g(c) = v;
          },
          [g](const RunConfig& c) { return fmt_list(g(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
ConfigField int_list_field(Get g) {
  return {[g](RunConfig& c, const std::string& r) {
            std::vector<int> v;
            for (const auto& item : split_list(r)) v.push_back(static_cast<int>(parse_int(item)));
            g(c) = v;
          },
          [g](const RunConfig& c) { return fmt_list(g(const_cast<RunConfig&>(c))); }};
}

#define RB_D(key, expr) {key, double_field([](RunConfig& c) -> double& { return c.expr; })}
#define RB_I(key, expr) {key, int_field([](RunConfig& c) -> int& { return c.expr; })}
#define RB_B(key, expr) {key, bool_field([](RunConfig& c) -> bool& { return c.expr; })}
#define RB_S(key, expr) {key, string_field([](RunConfig& c) -> std::string& { return c.expr; })}
#define RB_DL(key, expr) \
  {key, double_list_field([](RunConfig& c) -> std::vector<double>& { return c.expr; })}
#define RB_IL(key, expr) \
  {key, int_list_field([](RunConfig& c) -> std::vector<int>& { return c.expr; })}

/// Every accepted key, in serialization order.
inline const std::vector<std::pair<std::string, ConfigField>>& config_fields() {
  static const std::vector<std::pair<std::string, ConfigField>> fields = {
      {"seed",
       {[](RunConfig& c, const std::string& r) {
          const std::string s = trim(r);
          std::uint64_t v = 0;
          const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
          if (ec != std::errc() || p != s.data() + s.size() || s.empty())
            bad_value("a non-negative integer", r);
          c.seed = v;
        },
        [](const RunConfig& c) { return std::to_string(c.seed); }}},
      RB_D("sim.dt", sim.dt),
      RB_I("sim.past_steps", sim.past_steps),
      RB_I("sim.future_steps", sim.future_steps),
      RB_D("sim.robot_speed", sim.robot_speed),
      RB_D("sim.robot_speed_std", sim.robot_speed_std),
      RB_D("sim.robot_accel_std", sim.robot_accel_std),
      RB_D("sim.ped_speed_slow", sim.ped_speed_slow),
      RB_D("sim.ped_speed_fast", sim.ped_speed_fast),
      RB_D("sim.ped_past_speed", sim.ped_past_speed),
      RB_D("sim.mode_prob_fast", sim.mode_prob_fast),
      RB_D("sim.speed_noise_std", sim.speed_noise_std),
      RB_D("sim.heading_min", sim.heading_min),
      RB_D("sim.heading_max", sim.heading_max),
      RB_D("sim.lateral_min", sim.lateral_min),
      RB_D("sim.lateral_max", sim.lateral_max),
      RB_D("sim.spawn_jitter", sim.spawn_jitter),
      RB_D("sim.meet_lag", sim.meet_lag),
      RB_D("sim.speed_scale", sim.speed_scale),
      RB_D("ttc.lambda_t", ttc.lambda_t),
      RB_D("ttc.lambda_d", ttc.lambda_d),
      RB_D("ttc.epsilon", ttc.epsilon),
      RB_I("cvae.epochs", cvae.epochs),
      RB_I("cvae.batch_size", cvae.batch_size),
      RB_D("cvae.learning_rate", cvae.learning_rate),
      RB_D("cvae.beta", cvae.beta),
      RB_D("cvae.warmup_fraction", cvae.warmup_fraction),
      RB_I("cvae.hidden", cvae.dims.hidden),
      RB_I("cvae.latent_dim", cvae.dims.latent_dim),
      RB_I("biaser.epochs", biaser.epochs),
      RB_I("biaser.batch_size", biaser.batch_size),
      RB_D("biaser.learning_rate", biaser.learning_rate),
      RB_D("biaser.final_lr_fraction", biaser.final_lr_fraction),
      RB_D("biaser.penalty_weight", biaser.penalty_weight),
      RB_I("biaser.target_samples_phase1", biaser.target_samples_phase1),
      RB_I("biaser.target_samples_phase2", biaser.target_samples_phase2),
      RB_D("biaser.phase1_fraction", biaser.phase1_fraction),
      RB_I("biaser.inner_samples", biaser.inner_samples),
      RB_B("biaser.control_variate", biaser.control_variate),
      RB_D("biaser.sigma_grid_prob", biaser.sigma_grid_prob),
      RB_DL("biaser.sigma_grid", biaser.sigma_grid),
      {"biaser.conditioning",
       {[](RunConfig& c, const std::string& r) {
          try {
            c.biaser.conditioning = parse_robot_conditioning(parse_string(r));
          } catch (const UsageError& e) {
            throw ConfigError(e.what());
          }
        },
        [](const RunConfig& c) { return "\"" + to_string(c.biaser.conditioning) + "\""; }}},
      RB_I("planner.n_robot_samples", planner.cem.n_robot_samples),
      RB_I("planner.n_elites", planner.cem.n_elites),
      RB_I("planner.n_iter", planner.cem.n_iter),
      RB_D("planner.init_std", planner.cem.init_std),
      RB_D("planner.std_floor", planner.cem.std_floor),
      RB_D("planner.accel_limit", planner.cem.accel_limit),
      RB_I("planner.n_pred_samples", planner.cem.n_pred_samples),
      RB_B("planner.recondition", planner.cem.recondition),
      RB_D("planner.desired_speed", planner.desired_speed),
      RB_D("planner.tracking_weight", planner.tracking_weight),
      RB_I("experiments.train_scenes", experiments.train_scenes),
      RB_I("experiments.val_scenes", experiments.val_scenes),
      RB_DL("experiments.sigmas", experiments.sigmas),
      RB_I("experiments.k_min", experiments.k_min),
      RB_I("experiments.risk_k", experiments.risk_k),
      RB_I("experiments.ref_samples", experiments.ref_samples),
      RB_DL("experiments.risk_sigmas", experiments.risk_sigmas),
      RB_IL("experiments.risk_ks", experiments.risk_ks),
      RB_I("experiments.episodes", experiments.episodes),
      RB_DL("experiments.planning_sigmas", experiments.planning_sigmas),
      RB_IL("experiments.planning_ks", experiments.planning_ks),
      RB_I("experiments.neutral_k", experiments.neutral_k),
      RB_D("experiments.test_speed_scale", experiments.test_speed_scale),
      RB_S("paths.output_dir", paths.output_dir),
      RB_S("paths.train_data", paths.train_data),
      RB_S("paths.val_data", paths.val_data),
      RB_S("paths.cvae", paths.cvae),
      RB_S("paths.biaser", paths.biaser),
      RB_S("paths.planning_train_data", paths.planning_train_data),
      RB_S("paths.planning_cvae", paths.planning_cvae),
      RB_S("paths.planning_biaser", paths.planning_biaser),
  };
  return fields;
}

#undef RB_D
#undef RB_I
#undef RB_B
#undef RB_S
#undef RB_DL
#undef RB_IL

inline void check_relative(const std::string& key, const std::string& p) {
  const std::filesystem::path path(p);
  if (p.empty() || path.is_absolute()) throw ConfigError(key + " must be a relative path");
  for (const auto& part : path)
    if (part == "..") throw ConfigError(key + " must not leave the output directory");
}

}  // namespace detail

/// Throws ConfigError naming the offending key.
inline void RunConfig::validate() const {
  auto wrap = [](const std::string& section, const std::function<void()>& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(section + ": " + e.what());
    }
  };
  auto require = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError(key + " " + what);
  };
  require(sim.dt > 0.0, "sim.dt", "must be positive");
  require(sim.past_steps >= 2, "sim.past_steps", "must be at least 2");
  require(sim.future_steps >= 2, "sim.future_steps", "must be at least 2");
  require(sim.mode_prob_fast >= 0.0 && sim.mode_prob_fast <= 1.0, "sim.mode_prob_fast",
          "must lie in [0, 1]");
  require(sim.speed_scale > 0.0, "sim.speed_scale", "must be positive");
  wrap("sim", [&] { sim.validate(); });
  require(ttc.lambda_t > 0.0, "ttc.lambda_t", "must be positive");
  require(ttc.lambda_d > 0.0, "ttc.lambda_d", "must be positive");
  require(ttc.epsilon > 0.0, "ttc.epsilon", "must be positive");
  require(cvae.epochs >= 1, "cvae.epochs", "must be at least 1");
  require(cvae.batch_size >= 1, "cvae.batch_size", "must be at least 1");
  require(cvae.learning_rate >= 0.0, "cvae.learning_rate", "must be non-negative");
  require(cvae.beta >= 0.0, "cvae.beta", "must be non-negative");
  require(cvae.warmup_fraction >= 0.0 && cvae.warmup_fraction <= 1.0, "cvae.warmup_fraction",
          "must lie in [0, 1]");
  require(cvae.dims.hidden >= 1, "cvae.hidden", "must be at least 1");
  require(cvae.dims.latent_dim >= 1, "cvae.latent_dim", "must be at least 1");
  wrap("biaser", [&] { biaser.validate(); });
  require(biaser.phase1_fraction >= 0.0 && biaser.phase1_fraction <= 1.0,
          "biaser.phase1_fraction", "must lie in [0, 1]");
  wrap("planner", [&] { planner.cem.validate(); });
  require(planner.desired_speed >= 0.0, "planner.desired_speed", "must be non-negative");
  require(planner.tracking_weight >= 0.0, "planner.tracking_weight", "must be non-negative");
  const auto& e = experiments;
  require(e.train_scenes >= 1, "experiments.train_scenes", "must be at least 1");
  require(e.val_scenes >= 1, "experiments.val_scenes", "must be at least 1");
  require(e.k_min >= 1, "experiments.k_min", "must be at least 1");
  require(e.risk_k >= 1, "experiments.risk_k", "must be at least 1");
  require(e.ref_samples >= 1, "experiments.ref_samples", "must be at least 1");
  require(e.episodes >= 1, "experiments.episodes", "must be at least 1");
  require(e.neutral_k >= 1, "experiments.neutral_k", "must be at least 1");
  require(e.test_speed_scale > 0.0, "experiments.test_speed_scale", "must be positive");
  for (double s : e.sigmas) require(s >= 0.0 && s <= 1.0, "experiments.sigmas", "must lie in [0, 1]");
  for (double s : e.risk_sigmas)
    require(s >= 0.0 && s <= 1.0, "experiments.risk_sigmas", "must lie in [0, 1]");
  for (double s : e.planning_sigmas)
    require(s >= 0.0 && s <= 1.0, "experiments.planning_sigmas", "must lie in [0, 1]");
  for (int k : e.risk_ks) require(k >= 1, "experiments.risk_ks", "entries must be at least 1");
  for (int k : e.planning_ks) require(k >= 1, "experiments.planning_ks", "entries must be at least 1");
  require(!paths.output_dir.empty(), "paths.output_dir", "must not be empty");
  detail::check_relative("paths.train_data", paths.train_data);
  detail::check_relative("paths.val_data", paths.val_data);
  detail::check_relative("paths.cvae", paths.cvae);
  detail::check_relative("paths.biaser", paths.biaser);
  detail::check_relative("paths.planning_train_data", paths.planning_train_data);
  detail::check_relative("paths.planning_cvae", paths.planning_cvae);
  detail::check_relative("paths.planning_biaser", paths.planning_biaser);
}

/// Parses `[section]` headers and `key = value` lines (keys may also be
/// written dotted at top level). `#` starts a comment outside strings.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>") {
  RunConfig cfg;
  std::map<std::string, detail::ConfigField> fields;
  for (const auto& [k, f] : detail::config_fields()) fields.emplace(k, f);
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  auto where = [&](const std::string& key) {
    return source + ":" + std::to_string(lineno) + ": " + (key.empty() ? "" : key + ": ");
  };
  while (std::getline(in, line)) {
    ++lineno;
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_str = !in_str;
      if (line[i] == '#' && !in_str) {
        line.erase(i);
        break;
      }
    }
    const std::string s = detail::trim(line);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']' || s.size() < 3) throw ConfigError(where("") + "malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      bool known = false;
      for (const auto& [k, f] : detail::config_fields())
        if (k.rfind(section + ".", 0) == 0) known = true;
      if (!known) throw ConfigError(where(section) + "unknown section");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where("") + "expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    const auto it = fields.find(full);
    if (it == fields.end()) throw ConfigError(where(full) + "unknown key");
    if (seen.count(full))
      throw ConfigError(where(full) + "duplicate key (first set on line " +
                        std::to_string(seen[full]) + ")");
    seen[full] = lineno;
    try {
      it->second.set(cfg, s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where(full) + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    // Point at the line that set the key when there is one.
    const std::string msg = e.what();
    for (const auto& [k, l] : seen) {
      if (msg.rfind(k + " ", 0) == 0) {
        throw ConfigError(source + ":" + std::to_string(l) + ": " + msg);
      }
    }
    throw ConfigError(source + ": " + msg);
  }
  return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

/// Canonical text form: top-level keys, then one block per section.
inline std::string serialize_config(const RunConfig& cfg) {
  std::string out, section;
  for (const auto& [k, f] : detail::config_fields()) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) {
      out += k + " = " + f.get(cfg) + "\n";
      continue;
    }
    const std::string sec = k.substr(0, dot);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += k.substr(dot + 1) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return serialize_config(a) == serialize_config(b);
}

}  // namespace riskbias
