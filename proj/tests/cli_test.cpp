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

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "riskbias/cli.hpp"

namespace riskbias {
namespace {

namespace fs = std::filesystem;

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "riskbias");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  testing::internal::GetCapturedStdout();
  const std::string err = testing::internal::GetCapturedStderr();
  if (code != 0) std::cerr << "  [cli] " << err.substr(err.rfind("error:") == std::string::npos ? 0 : err.rfind("error:"));
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return out;
}

class CliTest : public testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("rb_cli_" + std::to_string(::getpid()));
    fs::create_directories(root_);
    cfg_ = root_ / "tiny.toml";
    std::ofstream(cfg_) << "seed = 3\n"
                           "[cvae]\nepochs = 1\nbatch_size = 16\nhidden = 8\n"
                           "[biaser]\nepochs = 1\nbatch_size = 16\n"
                           "target_samples_phase1 = 8\ntarget_samples_phase2 = 8\ninner_samples = 2\n"
                           "[planner]\nn_robot_samples = 8\nn_elites = 2\nn_iter = 1\n"
                           "n_pred_samples = 2\n"
                           "[experiments]\ntrain_scenes = 40\nval_scenes = 6\nref_samples = 32\n"
                           "risk_ks = [1, 2]\nepisodes = 2\nplanning_sigmas = [0.95]\n"
                           "planning_ks = [1]\nneutral_k = 1\n";
  }
  void TearDown() override {
    thread_cap() = 0;
    fs::remove_all(root_);
  }

  // Runs the whole tiny pipeline into `dir` with the given thread count.
  void pipeline(const fs::path& dir, int threads) {
    const std::vector<std::string> base = {"--config", cfg_.string(), "--output-dir",
                                           dir.string(), "--threads", std::to_string(threads)};
    auto with = [&](std::vector<std::string> tail) {
      std::vector<std::string> a = base;
      a.insert(a.end(), tail.begin(), tail.end());
      return a;
    };
    for (const auto& split : {"train", "val", "planning"})
      ASSERT_EQ(run(with({"gen-data", "--split", split})), 0);
    for (const auto& p : {"forecast", "planning"}) {
      ASSERT_EQ(run(with({"train-cvae", "--pipeline", p})), 0);
      ASSERT_EQ(run(with({"train-biaser", "--pipeline", p})), 0);
    }
    ASSERT_EQ(run(with({"eval-forecast"})), 0);
    ASSERT_EQ(run(with({"eval-risk", "--sigma", "0.95", "--k", "1,2"})), 0);
    ASSERT_EQ(run(with({"experiment", "--suite", "planning"})), 0);
    ASSERT_EQ(run(with({"plan", "--mode", "biased", "--sigma", "0.8"})), 0);
    ASSERT_EQ(run(with({"cost-map", "--resolution", "1.0"})), 0);
    ASSERT_EQ(run(with({"latent-map", "--resolution", "4", "--sigma", "0,0.95"})), 0);
  }

  fs::path root_, cfg_;
};

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"fly"}), 2);
  EXPECT_EQ(run({"gen-data", "--split", "test"}), 2);
  EXPECT_EQ(run({"--config", (root_ / "none.toml").string(), "gen-data"}), 2);
  const fs::path bad = root_ / "bad.toml";
  std::ofstream(bad) << "sim.dt = -1\n";
  EXPECT_EQ(run({"--config", bad.string(), "gen-data"}), 2);
  EXPECT_EQ(run({"--output-dir", (root_ / "u").string(), "eval-risk", "--k", "1,x"}), 2);
  EXPECT_EQ(run({"--output-dir", (root_ / "u").string(), "plan", "--mode", "greedy"}), 2);
  EXPECT_EQ(run({"--output-dir", (root_ / "u").string(), "plan", "--sigma", "1.5"}), 2);
}

TEST_F(CliTest, RuntimeErrorsExitOne) {
  const std::string out = (root_ / "empty").string();
  EXPECT_EQ(run({"--output-dir", out, "train-cvae"}), 1);
  EXPECT_EQ(run({"--output-dir", out, "eval-forecast"}), 1);
  EXPECT_EQ(run({"--output-dir", out, "experiment", "--suite", "planning"}), 1);
}

TEST_F(CliTest, PipelineIsByteIdenticalAcrossRunsAndThreads) {
  const fs::path dir = root_ / "run";
  pipeline(dir, 1);
  const auto a = snapshot(dir);
  for (const auto& f : {"cvae.ckpt", "biaser.ckpt", "planning_biaser.ckpt",
                        "eval_forecast/forecast_eval.csv", "eval_risk/risk_curves.csv",
                        "experiment_planning/planning.csv", "plan/plan.csv", "cost_map.csv",
                        "latent_map.csv", "latent_ellipses.json"})
    EXPECT_TRUE(a.count(f)) << f;
  for (int threads : {1, 4}) {
    fs::remove_all(dir);
    pipeline(dir, threads);
    const auto o = snapshot(dir);
    ASSERT_EQ(o.size(), a.size());
    for (const auto& [name, bytes] : a) {
      ASSERT_TRUE(o.count(name)) << name;
      EXPECT_TRUE(o.at(name) == bytes) << name << " differs with " << threads << " threads";
    }
  }
}

TEST_F(CliTest, SeedFlagOverridesConfig) {
  const std::string d1 = (root_ / "s1").string(), d2 = (root_ / "s2").string();
  ASSERT_EQ(run({"--config", cfg_.string(), "--output-dir", d1, "gen-data", "--n", "5"}), 0);
  ASSERT_EQ(run({"--config", cfg_.string(), "--output-dir", d2, "--seed", "4", "gen-data", "--n",
                 "5"}),
            0);
  EXPECT_NE(slurp(fs::path(d1) / "train.rbs"), slurp(fs::path(d2) / "train.rbs"));
}

}  // namespace
}  // namespace riskbias
