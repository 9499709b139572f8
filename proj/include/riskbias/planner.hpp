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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskbias/biaser.hpp"
#include "riskbias/parallel.hpp"
#include "riskbias/sim.hpp"

namespace riskbias {

struct CemConfig {
  int n_robot_samples = 100;
  int n_elites = 30;
  int n_iter = 10;
  double init_std = 1.0;
  double std_floor = 0.05;
  double accel_limit = 4.0;
  int n_pred_samples = 16;
  bool recondition = false;  // redraw biased forecasts for every iteration's mean

  void validate() const {
    if (n_robot_samples < 1) throw ConfigError("cem: n_robot_samples must be >= 1");
    if (n_elites < 1 || n_elites > n_robot_samples)
      throw ConfigError("cem: n_elites must lie in [1, n_robot_samples]");
    if (n_iter < 1) throw ConfigError("cem: n_iter must be >= 1");
    if (n_pred_samples < 1) throw ConfigError("cem: n_pred_samples must be >= 1");
    if (!(init_std >= 0.0) || !(std_floor >= 0.0) || !(accel_limit > 0.0))
      throw ConfigError("cem: std values must be >= 0 and accel_limit > 0");
  }
};

enum class PlanMode {
  kRiskNeutralBiased,      // mean cost over biased forecasts
  kRiskSensitiveUnbiased,  // CVaR over unbiased forecasts
  kRiskNeutralUnbiased,    // mean cost over unbiased forecasts
};

inline std::string to_string(PlanMode m) {
  switch (m) {
    case PlanMode::kRiskNeutralBiased: return "biased";
    case PlanMode::kRiskSensitiveUnbiased: return "risk_sensitive";
    case PlanMode::kRiskNeutralUnbiased: return "risk_neutral";
  }
  return "?";
}

inline PlanMode parse_plan_mode(const std::string& s) {
  if (s == "biased") return PlanMode::kRiskNeutralBiased;
  if (s == "risk_sensitive") return PlanMode::kRiskSensitiveUnbiased;
  if (s == "risk_neutral") return PlanMode::kRiskNeutralUnbiased;
  throw UsageError("unknown planner mode '" + s + "' (expected biased|risk_sensitive|risk_neutral)");
}

/// Constant-velocity trajectory along +x from `start`, points t = dt .. steps*dt.
inline Trajectory make_reference(Vec2 start, double desired_speed, int steps, double dt) {
  if (steps < 1) throw UsageError("make_reference: steps must be >= 1");
  Trajectory t;
  t.dt = dt;
  for (int k = 1; k <= steps; ++k) t.positions.push_back({start.x + desired_speed * dt * k, start.y});
  return t;
}

/// sum_t q_t ||p_t - ref_t||^2.
inline double tracking_cost(const Trajectory& robot, const Trajectory& ref,
                            std::span<const double> q) {
  if (robot.size() != ref.size())
    throw UsageError("tracking_cost: trajectory has " + std::to_string(robot.size()) +
                     " steps, reference has " + std::to_string(ref.size()));
  if (q.size() != robot.size())
    throw UsageError("tracking_cost: weight count " + std::to_string(q.size()) +
                     " does not match " + std::to_string(robot.size()) + " steps");
  double c = 0.0;
  for (std::size_t t = 0; t < robot.size(); ++t) {
    if (q[t] < 0.0) throw DomainError("tracking_cost: negative weight");
    const Vec2 d = robot.positions[t] - ref.positions[t];
    c += q[t] * (d.x * d.x + d.y * d.y);
  }
  return c;
}

struct PlanObjectiveSpec {
  PlanMode mode = PlanMode::kRiskNeutralBiased;
  double sigma = 0.0;
  std::vector<double> q;  // per-step position weights
  Trajectory reference;
  TtcParams ttc;

  static PlanObjectiveSpec uniform(PlanMode mode, double sigma, double weight,
                                   const Trajectory& ref) {
    PlanObjectiveSpec s;
    s.mode = mode;
    s.sigma = sigma;
    s.q.assign(ref.size(), weight);
    s.reference = ref;
    return s;
  }
};

/// Forecast source for the planner. `biaser` may be null for unbiased modes.
struct Predictor {
  const CvaeModel* cvae = nullptr;
  const BiaserModel* biaser = nullptr;
};

/// Scene context the planner optimizes in.
struct PlanContext {
  Trajectory x;           // pedestrian past
  Trajectory robot_past;  // robot positions up to t = 0
  double robot_speed0 = 0.0;
  RobotConditioning conditioning = RobotConditioning::kFuture;

  Vec2 robot_start() const { return robot_past.back(); }
};

inline PlanContext plan_context(const Scene& s, int past_steps) {
  PlanContext c;
  c.x = s.x;
  c.robot_past.dt = s.y_robot.dt;
  c.robot_past.positions.assign(s.y_robot.positions.begin(),
                                s.y_robot.positions.begin() + past_steps);
  c.robot_speed0 = s.robot_speed0;
  return c;
}

inline Trajectory rollout_plan(const PlanContext& ctx, std::span<const double> accels) {
  RobotDynamics d;
  d.kind = RobotDynamics::Kind::kDoubleIntegrator;
  d.position = ctx.robot_start();
  d.speed = ctx.robot_speed0;
  d.accels.assign(accels.begin(), accels.end());
  return rollout_robot(d, static_cast<int>(accels.size()), ctx.x.dt);
}

/// Draws K forecasts (relative frame, K x 2F) for the planner given a robot plan.
inline Tensor draw_plan_forecasts(const Predictor& pred, const PlanObjectiveSpec& spec,
                                  const PlanContext& ctx, const Trajectory& robot_future,
                                  std::size_t k, Rng& rng) {
  if (!pred.cvae) throw UsageError("planner: predictor has no cvae");
  if (k == 0) throw UsageError("planner: K must be at least 1");
  const RobotConditioning rc = pred.biaser ? pred.biaser->conditioning : ctx.conditioning;
  const Conditioning c = make_conditioning(ctx.x, ctx.robot_past, robot_future, rc);
  if (spec.mode == PlanMode::kRiskNeutralBiased) {
    if (!pred.biaser) throw UsageError("planner: biased mode needs a biaser");
    return decode_samples(*pred.cvae, c.past, encode_biased(*pred.biaser, c, spec.sigma), 0, k,
                          rng);
  }
  return decode_samples(*pred.cvae, c.past, encode_prior(*pred.cvae, c.past), 0, k, rng);
}

struct ObjectiveValue {
  double total = 0.0;
  double risk_term = 0.0;
  double tracking_term = 0.0;
};

/// Risk term over fixed forecasts plus tracking term for one robot future.
inline ObjectiveValue evaluate_plan(const Trajectory& robot_future, const Tensor& forecasts,
                                    const PlanObjectiveSpec& spec, const Vec2& origin) {
  const Tensor r = relative_row(robot_future, origin);
  const auto costs = forecast_costs(forecasts, r, robot_future.dt, spec.ttc);
  ObjectiveValue v;
  v.risk_term = spec.mode == PlanMode::kRiskSensitiveUnbiased ? cvar_mc(costs, spec.sigma)
                                                              : mean_cost(costs);
  v.tracking_term = tracking_cost(robot_future, spec.reference, spec.q);
  v.total = v.risk_term + v.tracking_term;
  return v;
}

/// Draws K forecasts for `robot_future` and evaluates the objective.
inline ObjectiveValue plan_objective(const Trajectory& robot_future, const PlanObjectiveSpec& spec,
                                     const Predictor& pred, const PlanContext& ctx, std::size_t k,
                                     Rng& rng) {
  const Tensor f = draw_plan_forecasts(pred, spec, ctx, robot_future, k, rng);
  return evaluate_plan(robot_future, f, spec, ctx.x.back());
}

struct PlanResult {
  std::vector<double> accels;
  Trajectory trajectory;  // robot future, t = dt .. F*dt
  ObjectiveValue objective;
  std::vector<double> elite_means;  // mean elite objective per iteration
};

/// Cross-entropy optimization over acceleration sequences. Forecasts are
/// drawn once, conditioned on the initial plan, unless `recondition` is set.
inline PlanResult cem_optimize(std::span<const double> init_accels, const PlanObjectiveSpec& spec,
                               const CemConfig& cfg, const Predictor& pred, const PlanContext& ctx,
                               Rng& rng) {
  cfg.validate();
  const std::size_t f = init_accels.size();
  if (f == 0) throw UsageError("cem_optimize: empty initial plan");
  if (spec.reference.size() != f || spec.q.size() != f)
    throw UsageError("cem_optimize: reference and weights must match the plan length");
  const auto k = static_cast<std::size_t>(cfg.n_pred_samples);
  const Vec2 origin = ctx.x.back();
  std::vector<double> mean(init_accels.begin(), init_accels.end());
  std::vector<double> sd(f, cfg.init_std);
  Rng forecast_rng = rng.split(0);
  Tensor forecasts = draw_plan_forecasts(pred, spec, ctx, rollout_plan(ctx, mean), k, forecast_rng);

  const auto n = static_cast<std::size_t>(cfg.n_robot_samples);
  const auto e = static_cast<std::size_t>(cfg.n_elites);
  PlanResult out;
  std::vector<std::vector<double>> cand(n, std::vector<double>(f));
  std::vector<double> score(n);
  for (int it = 0; it < cfg.n_iter; ++it) {
    Rng it_rng = rng.split(1 + static_cast<std::uint64_t>(it));
    if (cfg.recondition && it > 0) {
      Rng fr = forecast_rng.split(static_cast<std::uint64_t>(it));
      forecasts = draw_plan_forecasts(pred, spec, ctx, rollout_plan(ctx, mean), k, fr);
    }
    parallel_for(n, [&](std::size_t j) {
      Rng cr = it_rng.split(j);
      for (std::size_t t = 0; t < f; ++t)
        cand[j][t] = std::clamp(mean[t] + sd[t] * cr.normal(), -cfg.accel_limit, cfg.accel_limit);
      score[j] = evaluate_plan(rollout_plan(ctx, cand[j]), forecasts, spec, origin).total;
    });
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    double elite_sum = 0.0;
    for (std::size_t t = 0; t < f; ++t) {
      double m = 0.0;
      for (std::size_t i = 0; i < e; ++i) m += cand[order[i]][t];
      m /= static_cast<double>(e);
      double v = 0.0;
      for (std::size_t i = 0; i < e; ++i) v += (cand[order[i]][t] - m) * (cand[order[i]][t] - m);
      mean[t] = m;
      sd[t] = std::max(cfg.std_floor, std::sqrt(v / static_cast<double>(e)));
    }
    for (std::size_t i = 0; i < e; ++i) elite_sum += score[order[i]];
    out.elite_means.push_back(elite_sum / static_cast<double>(e));
  }
  out.accels = mean;
  out.trajectory = rollout_plan(ctx, mean);
  out.objective = evaluate_plan(out.trajectory, forecasts, spec, origin);
  return out;
}

inline void write_plan_csv(const PlanContext& ctx, const PlanResult& plan,
                           const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(17);
  os << "t,x,y,vx,vy,ax\n";
  const double dt = ctx.x.dt;
  Vec2 p = ctx.robot_start();
  double v = ctx.robot_speed0;
  for (std::size_t k = 0; k <= plan.accels.size(); ++k) {
    if (k > 0) p = plan.trajectory.positions[k - 1];
    const double a = k < plan.accels.size() ? plan.accels[k] : 0.0;
    os << dt * static_cast<double>(k) << ',' << p.x << ',' << p.y << ',' << v << ",0," << a << '\n';
    if (k < plan.accels.size()) v += plan.accels[k] * dt;
  }
}

inline void write_plan_summary(const PlanResult& plan, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  nlohmann::json j = {{"objective", plan.objective.total},
                      {"risk_term", plan.objective.risk_term},
                      {"tracking_term", plan.objective.tracking_term}};
  os << j.dump(2) << '\n';
}

}  // namespace riskbias
