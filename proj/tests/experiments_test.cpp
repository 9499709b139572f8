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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "riskbias/experiments.hpp"

namespace riskbias {
namespace {

std::filesystem::path temp_dir(const std::string& name) {
  return std::filesystem::temp_directory_path() /
         ("rb_" + std::to_string(::getpid()) + "_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Trajectory ending_at(double x, double y) {
  Trajectory t;
  t.positions = {{0, 0}, {x, y}};
  return t;
}

struct Models {
  CvaeModel cvae;
  BiaserModel biaser;
};

// Untrained network; the prior-initialized biaser equals the prior.
const Models& models() {
  static const Models m = [] {
    Rng rng(41);
    Models out{CvaeModel::create(CvaeDims{}, rng), {}};
    out.biaser = BiaserModel::from_prior(out.cvae, RobotConditioning::kFuture);
    return out;
  }();
  return m;
}

const Dataset& val_set() {
  static const Dataset d = generate_dataset(60, SimConfig{}, RobotFlavor::kConstantVelocity, 42);
  return d;
}

PlanningConfig tiny_planning() {
  PlanningConfig c;
  c.episodes = 4;
  c.sigmas = {0.95};
  c.ks = {1, 2};
  c.neutral_k = 2;
  c.cem.n_robot_samples = 12;
  c.cem.n_elites = 4;
  c.cem.n_iter = 2;
  c.seed = 3;
  return c;
}

TEST(FdeTest, Examples) {
  const Trajectory gt = ending_at(0, 0);
  const std::vector<Trajectory> f = {ending_at(2, 0), ending_at(0, 1), ending_at(3, 4)};
  EXPECT_DOUBLE_EQ(min_fde(f, gt), 1.0);
  EXPECT_DOUBLE_EQ(min_fde(std::span(f).first(1), gt), fde(f[0], gt));
  const std::vector<Trajectory> with_gt = {ending_at(2, 0), gt};
  EXPECT_EQ(min_fde(with_gt, gt), 0.0);
  EXPECT_THROW(min_fde(std::vector<Trajectory>{}, gt), UsageError);
  Trajectory shorter;
  shorter.positions = {{0, 0}};
  EXPECT_THROW(fde(shorter, gt), UsageError);
}

TEST(FdeTest, PermutationInvariantAndNonIncreasing) {
  Rng rng(1);
  const Trajectory gt = ending_at(rng.normal(), rng.normal());
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Trajectory> f;
    for (int i = 0; i < 12; ++i) f.push_back(ending_at(rng.normal(), rng.normal()));
    double prev = min_fde(std::span(f).first(1), gt);
    for (std::size_t k = 2; k <= f.size(); ++k) {
      const double cur = min_fde(std::span(f).first(k), gt);
      ASSERT_LE(cur, prev);
      prev = cur;
    }
    std::vector<Trajectory> g = f;
    std::reverse(g.begin(), g.end());
    std::rotate(g.begin(), g.begin() + 5, g.end());
    ASSERT_EQ(min_fde(g, gt), min_fde(f, gt));
  }
}

TEST(SummaryTest, ExamplesAndQuantiles) {
  const std::vector<double> v = {1, 2, 3, 4};
  const Summary s = summarize(v);
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.stddev, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.se, s.stddev / 2.0, 1e-15);
  EXPECT_NEAR(s.ci95, 1.959963984540054 * s.se, 1e-15);
  EXPECT_EQ(summarize(std::vector<double>{7}).se, 0.0);
  EXPECT_THROW(summarize(std::vector<double>{}), UsageError);
  EXPECT_DOUBLE_EQ(quantile(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 1.0 / 3.0), 2.0);
  EXPECT_THROW(quantile(v, 1.5), DomainError);
}

TEST(SummaryTest, PairwiseSumMatchesCompensatedSum) {
  Rng rng(2);
  std::vector<double> v(10007);
  for (double& x : v) x = rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-3.0, 3.0));
  long double exact = 0.0L;
  for (double x : v) exact += x;
  EXPECT_NEAR(pairwise_sum(v), static_cast<double>(exact), 1e-9);
}

TEST(GitHashTest, KnownBlobs) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST(ForecastEvalTest, RowInvariantsAndDeterminism) {
  const Models& m = models();
  ForecastEvalConfig cfg;
  cfg.ref_n = 256;
  cfg.seed = 5;
  const auto rows = run_forecast_eval(m.cvae, m.biaser, val_set(), cfg);
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_FALSE(rows[0].sigma.has_value());
  EXPECT_FALSE(rows[0].risk_err.has_value());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    EXPECT_EQ(*rows[r].sigma, cfg.sigmas[r - 1]);
    EXPECT_GE(rows[r].risk_abs_err->mean, std::abs(rows[r].risk_err->mean));
  }
  for (const auto& r : rows) EXPECT_LE(r.minfde.mean, r.fde1.mean);
  // Common random numbers and a prior-equal biaser: the sigma=0 row repeats the unbiased row.
  EXPECT_DOUBLE_EQ(rows[1].minfde.mean, rows[0].minfde.mean);
  EXPECT_DOUBLE_EQ(rows[1].fde1.mean, rows[0].fde1.mean);
  const auto again = run_forecast_eval(m.cvae, m.biaser, val_set(), cfg);
  EXPECT_EQ(forecast_csv(rows), forecast_csv(again));
  EXPECT_THROW(run_forecast_eval(m.cvae, m.biaser, Dataset{}, cfg), UsageError);
  CvaeModel other = m.cvae;
  other.prior.layers[0].bias(0, 0) += 1.0;
  EXPECT_THROW(run_forecast_eval(other, m.biaser, val_set(), cfg), MismatchError);
}

TEST(RiskCurveTest, RiskNeutralEstimatorsAreUnbiased) {
  const Models& m = models();
  RiskCurveConfig cfg;
  cfg.sigmas = {0.0};
  cfg.ks = {1, 4};
  cfg.ref_n = 512;
  cfg.seed = 6;
  const auto rows = run_risk_curves(m.cvae, m.biaser, val_set(), cfg);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_LE(std::abs(r.err.mean), 2.0 * r.err.se + 1e-12) << r.method << " K=" << r.k;
    EXPECT_LE(r.q05, r.q95);
  }
  EXPECT_EQ(risk_curves_csv(rows), risk_curves_csv(run_risk_curves(m.cvae, m.biaser, val_set(), cfg)));
  cfg.ks = {0};
  EXPECT_THROW(run_risk_curves(m.cvae, m.biaser, val_set(), cfg), UsageError);
}

TEST(RiskCurveTest, SmallSampleCvarUnderestimates) {
  const Models& m = models();
  RiskCurveConfig cfg;
  cfg.ks = {1, 2};
  cfg.ref_n = 1024;
  cfg.seed = 7;
  const auto rows = run_risk_curves(m.cvae, m.biaser, val_set(), cfg);
  for (const auto& r : rows) {
    if (r.method != "unbiased") continue;
    EXPECT_LT(r.err.mean + 1.645 * r.err.se, 0.0) << "K=" << r.k;
  }
}

TEST(PlanningExperimentTest, GridShapeAndDeterminism) {
  const Models& m = models();
  const PlanningConfig cfg = tiny_planning();
  const auto rows = run_planning_experiment(m.cvae, m.biaser, SimConfig{}, cfg);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].mode, PlanMode::kRiskNeutralUnbiased);
  EXPECT_EQ(rows[0].k, 2);
  for (const auto& r : rows) {
    EXPECT_EQ(r.ttc.n, 4u);
    for (double v : r.ttc_values) {
      EXPECT_GT(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(find_row(rows, PlanMode::kRiskNeutralBiased, 0.95, 2).k, 2);
  EXPECT_THROW(find_row(rows, PlanMode::kRiskNeutralBiased, 0.8, 2), UsageError);
  const std::size_t saved = thread_cap();
  thread_cap() = 3;
  const auto again = run_planning_experiment(m.cvae, m.biaser, SimConfig{}, cfg);
  thread_cap() = saved;
  EXPECT_EQ(planning_csv(rows), planning_csv(again));
  const std::string csv = planning_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "mode,sigma,K,ttc_mean,ttc_ci,track_mean,track_ci,n_episodes");
  EXPECT_NE(csv.find("\nrisk_neutral,NA,2,"), std::string::npos);
  const std::string ep = planning_episodes_csv(rows);
  EXPECT_EQ(ep.substr(0, ep.find('\n')), "mode,sigma,K,episode,ttc,track");
  EXPECT_EQ(static_cast<std::size_t>(std::count(ep.begin(), ep.end(), '\n')),
            1 + rows.size() * 4);
  PlanningConfig bad = cfg;
  bad.episodes = 0;
  EXPECT_THROW(run_planning_experiment(m.cvae, m.biaser, SimConfig{}, bad), UsageError);
}

TEST(PlanningExperimentTest, IntervalsShrinkWithEpisodes) {
  const Models& m = models();
  PlanningConfig cfg = tiny_planning();
  cfg.sigmas.clear();
  cfg.ks.clear();
  cfg.neutral_k = 1;
  cfg.cem.n_iter = 1;
  cfg.episodes = 25;
  const double ci25 = run_planning_experiment(m.cvae, m.biaser, SimConfig{}, cfg)[0].ttc.ci95;
  cfg.episodes = 100;
  const double ci100 = run_planning_experiment(m.cvae, m.biaser, SimConfig{}, cfg)[0].ttc.ci95;
  // Four times the episodes halves the interval, up to the spread estimate.
  EXPECT_GT(ci25 / ci100, 1.4);
  EXPECT_LT(ci25 / ci100, 2.8);
}

TEST(ReportTest, ByteIdenticalAndManifest) {
  Report r;
  r.risk_curves = {{"biased", 0.95, 1, summarize(std::vector<double>{0.1, -0.1}), -0.1, 0.1}};
  const auto a = temp_dir("ra"), b = temp_dir("rb");
  const auto wa = emit_report(r, a, "seed = 1\n", 1);
  emit_report(r, b, "seed = 1\n", 1);
  ASSERT_EQ(wa.size(), 2u);
  EXPECT_EQ(slurp(a / "risk_curves.csv"), slurp(b / "risk_curves.csv"));
  EXPECT_EQ(slurp(a / "manifest.json"), slurp(b / "manifest.json"));
  const auto man = nlohmann::json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(man.at("seed").get<int>(), 1);
  EXPECT_EQ(man.at("config_hash").get<std::string>(), git_blob_hash("seed = 1\n"));
  EXPECT_EQ(man.at("files").at("risk_curves.csv").get<std::string>(),
            git_blob_hash(slurp(a / "risk_curves.csv")));
  EXPECT_FALSE(std::filesystem::exists(a / "forecast_eval.csv"));
  const auto c = temp_dir("rc");
  EXPECT_THROW(emit_report(Report{}, c, "", 1), UsageError);
  EXPECT_FALSE(std::filesystem::exists(c));
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(ReportTest, ForecastCsvUsesNaForUnbiasedRow) {
  ForecastEvalRow u;
  u.minfde = summarize(std::vector<double>{1.0});
  u.fde1 = summarize(std::vector<double>{2.0});
  const std::string csv = forecast_csv({u});
  EXPECT_NE(csv.find("\nunbiased,1,2,NA,NA,0,0,NA,NA\n"), std::string::npos);
}

}  // namespace
}  // namespace riskbias
