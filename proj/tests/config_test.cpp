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

#include <string>

#include "riskbias/config.hpp"

namespace riskbias {
namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config_text(text, "cfg");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, EmptyTextGivesDefaults) {
  const RunConfig c = parse_config_text("");
  EXPECT_TRUE(c == RunConfig{});
  EXPECT_EQ(c.sim.dt, 0.1);
  EXPECT_EQ(c.planner.cem.n_robot_samples, 100);
  EXPECT_EQ(c.biaser.target_samples_phase2, 256);
  EXPECT_EQ(c.experiments.risk_ks, (std::vector<int>{1, 2, 4, 8, 16}));
  EXPECT_EQ(parse_config_text("# only a comment\n\n   \n"), RunConfig{});
}

TEST(ConfigTest, SectionsDottedKeysListsAndComments) {
  const RunConfig c = parse_config_text(
      "seed = 7\n"
      "sim.dt = 0.05  # finer steps\n"
      "[biaser]\n"
      "conditioning = \"past\"\n"
      "sigma_grid = [0.0, 0.5]\n"
      "[planner]\n"
      "recondition = true\n"
      "[paths]\n"
      "output_dir = \"runs/a#1\"\n");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.sim.dt, 0.05);
  EXPECT_EQ(c.biaser.conditioning, RobotConditioning::kPast);
  EXPECT_EQ(c.biaser.sigma_grid, (std::vector<double>{0.0, 0.5}));
  EXPECT_TRUE(c.planner.cem.recondition);
  EXPECT_EQ(c.paths.output_dir, "runs/a#1");
}

TEST(ConfigTest, RoundTripIsExact) {
  RunConfig c;
  c.seed = 123456789012345ull;
  c.sim.dt = 0.1 + 1e-16;
  c.sim.heading_min = 1.2345678901234567;
  c.biaser.sigma_grid = {0.1, 1.0 / 3.0};
  c.experiments.planning_ks = {3, 5};
  c.paths.cvae = "nested/cvae x#1.ckpt";
  const std::string text = serialize_config(c);
  const RunConfig back = parse_config_text(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.sim.heading_min, c.sim.heading_min);
  EXPECT_EQ(back.paths.cvae, c.paths.cvae);
  EXPECT_EQ(back.biaser.sigma_grid, c.biaser.sigma_grid);
}

TEST(ConfigTest, ErrorsNameKeyAndLine) {
  const std::string neg = error_of("\nsim.dt = -1\n");
  EXPECT_NE(neg.find("sim.dt"), std::string::npos) << neg;
  EXPECT_NE(neg.find("cfg:2"), std::string::npos) << neg;
  const std::string unknown = error_of("[sim]\nspeed = 3\n");
  EXPECT_NE(unknown.find("sim.speed"), std::string::npos) << unknown;
  EXPECT_NE(unknown.find("unknown key"), std::string::npos);
  const std::string type = error_of("[cvae]\nepochs = many\n");
  EXPECT_NE(type.find("cvae.epochs"), std::string::npos) << type;
  EXPECT_NE(error_of("[cvae]\nepochs = 2.5\n"), "");
  EXPECT_NE(error_of("[nonsense]\n").find("unknown section"), std::string::npos);
  EXPECT_NE(error_of("seed = 1\nseed = 2\n").find("duplicate"), std::string::npos);
  EXPECT_NE(error_of("sim.dt\n"), "");
  EXPECT_NE(error_of("[sim\n"), "");
  EXPECT_NE(error_of("planner.recondition = maybe\n"), "");
  EXPECT_NE(error_of("biaser.conditioning = \"sideways\"\n"), "");
  EXPECT_NE(error_of("experiments.sigmas = [0.5, 1.5]\n").find("experiments.sigmas"),
            std::string::npos);
  EXPECT_NE(error_of("planner.n_elites = 500\n"), "");
  EXPECT_NE(error_of("seed = -3\n"), "");
  EXPECT_NE(error_of("paths.cvae = \"a\"b\"\n"), "");
}

TEST(ConfigTest, PathsStayInsideOutputDirectory) {
  EXPECT_NE(error_of("paths.cvae = \"/etc/cvae.ckpt\"\n").find("paths.cvae"), std::string::npos);
  EXPECT_NE(error_of("paths.biaser = \"../b.ckpt\"\n").find("paths.biaser"), std::string::npos);
  EXPECT_NE(error_of("paths.val_data = \"\"\n"), "");
  const RunConfig c = parse_config_text("paths.output_dir = \"o\"\npaths.cvae = \"sub/c.ckpt\"\n");
  EXPECT_EQ(c.paths.resolve(c.paths.cvae), std::filesystem::path("o/sub/c.ckpt"));
}

TEST(ConfigTest, MissingFileIsIoError) {
  EXPECT_THROW(parse_config("/nonexistent/riskbias.toml"), IoError);
}

}  // namespace
}  // namespace riskbias
