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


#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "riskbias/planner.hpp"

namespace riskbias {
namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("rb_" + std::to_string(::getpid()) + "_" + name);
}

struct Models {
  CvaeModel cvae;
  BiaserModel biaser;
};

const Models& models() {
  static const Models m = [] {
    Rng rng(31);
    Models out{CvaeModel::create(CvaeDims{}, rng), {}};
    out.biaser = BiaserModel::from_prior(out.cvae, RobotConditioning::kFuture);
    return out;
  }();
  return m;
}

PlanContext road_context(std::uint64_t seed, double shift_x = 0.0) {
  Rng rng(seed);
  Scene s = road_scene(SimConfig{}, rng);
  for (auto& p : s.x.positions) p.x += shift_x;
  return plan_context(s, SimConfig{}.past_steps);
}

PlanObjectiveSpec spec_for(const PlanContext& ctx, PlanMode mode, double sigma, double weight,
                           double speed = 14.0) {
  const int f = SimConfig{}.future_steps;
  return PlanObjectiveSpec::uniform(mode, sigma, weight,
                                    make_reference(ctx.robot_start(), speed, f, ctx.x.dt));
}

std::vector<double> zeros() { return std::vector<double>(SimConfig{}.future_steps, 0.0); }

TEST(TrackingCostTest, Examples) {
  Trajectory a;
  a.positions = {{0, 0}, {1, 1}};
  EXPECT_EQ(tracking_cost(a, a, std::vector<double>{1, 1}), 0.0);
  Trajectory one, off;
  one.positions = {{0, 0}};
  off.positions = {{3, 4}};
  EXPECT_DOUBLE_EQ(tracking_cost(off, one, std::vector<double>{1}), 25.0);
  EXPECT_EQ(tracking_cost(off, one, std::vector<double>{0}), 0.0);
  EXPECT_THROW(tracking_cost(a, one, std::vector<double>{1}), UsageError);
  EXPECT_THROW(tracking_cost(a, a, std::vector<double>{1}), UsageError);
  EXPECT_THROW(tracking_cost(off, one, std::vector<double>{-1}), DomainError);
}

TEST(ReferenceTest, ConstantSpeedAlongX) {
  const Trajectory r = make_reference({2, 1}, 10.0, 3, 0.1);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_DOUBLE_EQ(r.positions[2].x, 5.0);
  EXPECT_DOUBLE_EQ(r.positions[2].y, 1.0);
  EXPECT_THROW(make_reference({0, 0}, 1.0, 0, 0.1), UsageError);
}

TEST(PlanModeTest, ParseRoundTrip) {
  for (PlanMode m : {PlanMode::kRiskNeutralBiased, PlanMode::kRiskSensitiveUnbiased,
                     PlanMode::kRiskNeutralUnbiased})
    EXPECT_EQ(parse_plan_mode(to_string(m)), m);
  EXPECT_THROW(parse_plan_mode("greedy"), UsageError);
}

TEST(PlanObjectiveTest, RiskNeutralLevelAgreesAcrossModes) {
  const Models& m = models();
  const PlanContext ctx = road_context(1);
  const Predictor pred{&m.cvae, &m.biaser};
  const Trajectory robot = rollout_plan(ctx, zeros());
  // The prior-initialized biaser reproduces the prior, so forecasts coincide.
  Rng a(5), b(5);
  const auto biased = plan_objective(robot, spec_for(ctx, PlanMode::kRiskNeutralBiased, 0.0, 0.0),
                                     pred, ctx, 16, a);
  const auto sensitive = plan_objective(
      robot, spec_for(ctx, PlanMode::kRiskSensitiveUnbiased, 0.0, 0.0), pred, ctx, 16, b);
  EXPECT_NEAR(biased.risk_term, sensitive.risk_term, 1e-12);
  EXPECT_GT(biased.risk_term, 0.0);
}

TEST(PlanObjectiveTest, SingleSampleAndDistantPedestrian) {
  const Models& m = models();
  const PlanContext ctx = road_context(2);
  const Predictor pred{&m.cvae, nullptr};
  const Trajectory robot = rollout_plan(ctx, zeros());
  const auto spec = spec_for(ctx, PlanMode::kRiskSensitiveUnbiased, 0.9, 0.05);
  Rng a(6), b(6);
  const auto v = plan_objective(robot, spec, pred, ctx, 1, a);
  const Tensor f = draw_plan_forecasts(pred, spec, ctx, robot, 1, b);
  const auto costs = forecast_costs(f, relative_row(robot, ctx.x.back()), ctx.x.dt, spec.ttc);
  EXPECT_DOUBLE_EQ(v.risk_term, costs[0]);
  EXPECT_DOUBLE_EQ(v.total, v.risk_term + v.tracking_term);

  const PlanContext far = road_context(2, 1e6);
  Rng c(7);
  const auto vf = plan_objective(rollout_plan(far, zeros()),
                                 spec_for(far, PlanMode::kRiskSensitiveUnbiased, 0.9, 0.05), pred,
                                 far, 16, c);
  EXPECT_LT(vf.risk_term, 1e-12);
  EXPECT_NEAR(vf.total, vf.tracking_term, 1e-12);

  Rng d(8);
  EXPECT_THROW(plan_objective(robot, spec_for(ctx, PlanMode::kRiskNeutralBiased, 0.5, 0.05), pred,
                              ctx, 4, d),
               UsageError);
  EXPECT_THROW(plan_objective(robot, spec, pred, ctx, 0, d), UsageError);
}

TEST(CemTest, ConvergesOnTrackingBowl) {
  const Models& m = models();
  PlanContext ctx = road_context(3, 1e6);
  ctx.robot_speed0 = 14.0;
  const Predictor pred{&m.cvae, nullptr};
  const auto spec = spec_for(ctx, PlanMode::kRiskNeutralUnbiased, 0.0, 1.0, 14.0);
  // The initial plan sheds 5 m/s over the horizon.
  const std::vector<double> init(SimConfig{}.future_steps, -1.0);
  const double initial = tracking_cost(rollout_plan(ctx, init), spec.reference, spec.q);
  Rng rng(9);
  const PlanResult r = cem_optimize(init, spec, CemConfig{}, pred, ctx, rng);
  EXPECT_LT(r.objective.tracking_term, 1e-2 * initial);
  for (double a : r.accels) EXPECT_LE(std::abs(a), 4.0);
}

TEST(CemTest, SingleIterationIsOneEliteAverage) {
  const Models& m = models();
  const PlanContext ctx = road_context(4);
  const Predictor pred{&m.cvae, nullptr};
  const auto spec = spec_for(ctx, PlanMode::kRiskSensitiveUnbiased, 0.8, 1e-3);
  CemConfig cfg;
  cfg.n_iter = 1;
  Rng rng(10);
  const PlanResult r = cem_optimize(zeros(), spec, cfg, pred, ctx, rng);
  ASSERT_EQ(r.elite_means.size(), 1u);

  // Replay the same streams by hand.
  Rng base(10);
  Rng fr = base.split(0);
  const Tensor f = draw_plan_forecasts(pred, spec, ctx, rollout_plan(ctx, zeros()), 16, fr);
  Rng it = base.split(1);
  std::vector<std::pair<double, std::size_t>> scored;
  std::vector<std::vector<double>> cand(100, zeros());
  for (std::size_t j = 0; j < 100; ++j) {
    Rng cr = it.split(j);
    for (double& a : cand[j]) a = std::clamp(cr.normal(), -4.0, 4.0);
    scored.push_back({evaluate_plan(rollout_plan(ctx, cand[j]), f, spec, ctx.x.back()).total, j});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (std::size_t t = 0; t < r.accels.size(); ++t) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 30; ++i) mean += cand[scored[i].second][t] / 30.0;
    EXPECT_NEAR(r.accels[t], mean, 1e-12);
  }
  cfg.n_iter = 0;
  EXPECT_THROW(cem_optimize(zeros(), spec, cfg, pred, ctx, rng), ConfigError);
  cfg = {};
  cfg.n_elites = 101;
  EXPECT_THROW(cem_optimize(zeros(), spec, cfg, pred, ctx, rng), ConfigError);
}

TEST(CemTest, DeterministicAcrossThreadCountsAndLeavesModelsAlone) {
  const Models& m = models();
  const std::uint64_t hc = parameter_hash(m.cvae);
  const PlanContext ctx = road_context(5);
  const Predictor pred{&m.cvae, &m.biaser};
  const auto spec = spec_for(ctx, PlanMode::kRiskNeutralBiased, 0.95, 1e-5);
  const std::size_t saved = thread_cap();
  thread_cap() = 1;
  Rng a(11);
  const PlanResult r1 = cem_optimize(zeros(), spec, CemConfig{}, pred, ctx, a);
  thread_cap() = 8;
  Rng b(11);
  const PlanResult r2 = cem_optimize(zeros(), spec, CemConfig{}, pred, ctx, b);
  thread_cap() = saved;
  EXPECT_EQ(r1.accels, r2.accels);
  EXPECT_EQ(r1.elite_means, r2.elite_means);
  EXPECT_EQ(parameter_hash(m.cvae), hc);
  EXPECT_TRUE(m.biaser == BiaserModel::from_prior(m.cvae, RobotConditioning::kFuture));
}

TEST(CemTest, EliteObjectiveRarelyIncreases) {
  const Models& m = models();
  const Predictor pred{&m.cvae, nullptr};
  int steps = 0, decreasing = 0;
  double worst_rise = 0.0;
  for (int s = 0; s < 20; ++s) {
    const PlanContext ctx = road_context(100 + s);
    const auto spec = spec_for(ctx, PlanMode::kRiskSensitiveUnbiased, 0.95, 1e-5);
    Rng rng(200 + s);
    const PlanResult r = cem_optimize(zeros(), spec, CemConfig{}, pred, ctx, rng);
    for (std::size_t i = 1; i < r.elite_means.size(); ++i) {
      ++steps;
      decreasing += r.elite_means[i] <= r.elite_means[i - 1];
      worst_rise = std::max(worst_rise, r.elite_means[i] / r.elite_means[i - 1] - 1.0);
    }
  }
  EXPECT_GE(decreasing, 0.9 * steps);
  EXPECT_LT(worst_rise, 0.01);
}

TEST(CemTest, RuntimeIsLinearInSampleCount) {
  const Models& m = models();
  const PlanContext ctx = road_context(6);
  const Predictor pred{&m.cvae, nullptr};
  const auto spec = spec_for(ctx, PlanMode::kRiskSensitiveUnbiased, 0.8, 1e-5);
  CemConfig cfg;
  cfg.n_iter = 2;
  const std::vector<double> ks = {1, 16, 64};
  std::vector<double> secs;
  for (double k : ks) {
    cfg.n_pred_samples = static_cast<int>(k);
    double best = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      Rng rng(12);
      const auto t0 = std::chrono::steady_clock::now();
      cem_optimize(zeros(), spec, cfg, pred, ctx, rng);
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                                .count());
    }
    secs.push_back(best);
  }
  const double mk = std::accumulate(ks.begin(), ks.end(), 0.0) / 3.0;
  const double ms = std::accumulate(secs.begin(), secs.end(), 0.0) / 3.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (int i = 0; i < 3; ++i) {
    sxy += (ks[i] - mk) * (secs[i] - ms);
    sxx += (ks[i] - mk) * (ks[i] - mk);
    syy += (secs[i] - ms) * (secs[i] - ms);
  }
  EXPECT_GT(sxy * sxy / (sxx * syy), 0.9);
}

TEST(PlanOutputTest, CsvAndSummary) {
  const Models& m = models();
  const PlanContext ctx = road_context(7);
  const Predictor pred{&m.cvae, nullptr};
  CemConfig cfg;
  cfg.n_iter = 1;
  Rng rng(13);
  const PlanResult r = cem_optimize(
      zeros(), spec_for(ctx, PlanMode::kRiskNeutralUnbiased, 0.0, 1e-5), cfg, pred, ctx, rng);
  const auto csv = temp_path("plan.csv"), json = temp_path("plan.json");
  write_plan_csv(ctx, r, csv);
  write_plan_summary(r, json);
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,x,y,vx,vy,ax");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, SimConfig{}.future_steps + 1);
  std::ifstream js(json);
  const auto j = nlohmann::json::parse(js);
  EXPECT_DOUBLE_EQ(j.at("objective").get<double>(), r.objective.total);
  EXPECT_TRUE(j.contains("risk_term") && j.contains("tracking_term"));
  std::filesystem::remove(csv);
  std::filesystem::remove(json);
}

}  // namespace
}  // namespace riskbias
