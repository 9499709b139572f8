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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskbias/config.hpp"
#include "riskbias/diagnostics.hpp"
#include "riskbias/experiments.hpp"

namespace riskbias {

/// Stream identifiers used to derive per-stage seeds from the run seed.
enum class Stage : std::uint64_t {
  kTrainData = 1,
  kValData = 2,
  kPlanningData = 3,
  kCvae = 4,
  kBiaser = 5,
  kForecastEval = 6,
  kRiskEval = 7,
  kPlanning = 8,
  kPlan = 9,
  kLatentMap = 10,
  kPlanningCvae = 11,
  kPlanningBiaser = 12,
};

inline std::uint64_t stage_seed(std::uint64_t seed, Stage s) {
  Rng r = Rng(seed).split(static_cast<std::uint64_t>(s));
  return r();
}

/// Which trained pair a command uses.
enum class Pipeline { kForecast, kPlanning };

inline Pipeline parse_pipeline(const std::string& s) {
  if (s == "forecast") return Pipeline::kForecast;
  if (s == "planning") return Pipeline::kPlanning;
  throw UsageError("unknown pipeline '" + s + "' (expected forecast|planning)");
}

struct PipelineFiles {
  std::filesystem::path data, cvae, biaser, cvae_curve, biaser_curve;
  RobotFlavor flavor;
  Stage data_stage, cvae_stage, biaser_stage;
};

inline PipelineFiles pipeline_files(const RunConfig& c, Pipeline p) {
  const auto& ps = c.paths;
  if (p == Pipeline::kForecast)
    return {ps.resolve(ps.train_data), ps.resolve(ps.cvae), ps.resolve(ps.biaser),
            ps.resolve("cvae_curve.csv"), ps.resolve("biaser_curve.csv"),
            RobotFlavor::kConstantVelocity, Stage::kTrainData, Stage::kCvae, Stage::kBiaser};
  return {ps.resolve(ps.planning_train_data), ps.resolve(ps.planning_cvae),
          ps.resolve(ps.planning_biaser), ps.resolve("planning_cvae_curve.csv"),
          ps.resolve("planning_biaser_curve.csv"), RobotFlavor::kRandomAccel,
          Stage::kPlanningData, Stage::kPlanningCvae, Stage::kPlanningBiaser};
}

inline CvaeTrainConfig cvae_config(const RunConfig& c) {
  CvaeTrainConfig t = c.cvae;
  t.dims.past_steps = c.sim.past_steps;
  t.dims.future_steps = c.sim.future_steps;
  return t;
}

inline BiasTrainConfig biaser_config(const RunConfig& c) {
  BiasTrainConfig b = c.biaser;
  b.ttc = c.ttc;
  return b;
}

inline CvaeModel load_cvae(const RunConfig& c, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing cvae checkpoint " + path.string());
  return CvaeModel::load(path, cvae_config(c).dims);
}

inline BiaserModel load_biaser(const std::filesystem::path& path, const CvaeModel& cvae) {
  if (!std::filesystem::exists(path)) throw IoError("missing biaser checkpoint " + path.string());
  BiaserModel b = BiaserModel::load(path);
  b.check_cvae(cvae);
  return b;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing dataset " + path.string());
  return read_dataset(path);
}

/// Validation scenes are regenerated from the seed when no file exists.
inline Dataset validation_set(const RunConfig& c, RobotFlavor flavor) {
  const auto path = c.paths.resolve(c.paths.val_data);
  if (flavor == RobotFlavor::kConstantVelocity && std::filesystem::exists(path))
    return read_dataset(path);
  return generate_dataset(static_cast<std::size_t>(c.experiments.val_scenes), c.sim, flavor,
                          stage_seed(c.seed, Stage::kValData));
}

inline std::vector<std::filesystem::path> train_pipeline_stage(const RunConfig& c, Pipeline p,
                                                               bool cvae_stage) {
  const PipelineFiles f = pipeline_files(c, p);
  const Dataset data = load_dataset(f.data);
  std::filesystem::create_directories(f.cvae.parent_path());
  if (cvae_stage) {
    Rng rng(stage_seed(c.seed, f.cvae_stage));
    std::vector<TrainCurveRow> curve;
    const CvaeModel m = train_cvae(data, cvae_config(c), rng, &curve);
    m.save(f.cvae);
    write_cvae_curve_csv(curve, f.cvae_curve);
    return {f.cvae, f.cvae_curve};
  }
  const CvaeModel m = load_cvae(c, f.cvae);
  Rng rng(stage_seed(c.seed, f.biaser_stage));
  std::vector<BiasCurveRow> curve;
  const BiaserModel b = train_biaser(m, data, biaser_config(c), rng, &curve);
  b.save(f.biaser);
  write_biaser_curve_csv(curve, f.biaser_curve);
  return {f.biaser, f.biaser_curve};
}

inline PlanningConfig planning_config(const RunConfig& c) {
  PlanningConfig p;
  p.episodes = c.experiments.episodes;
  p.sigmas = c.experiments.planning_sigmas;
  p.ks = c.experiments.planning_ks;
  p.neutral_k = c.experiments.neutral_k;
  p.speed_scale = c.experiments.test_speed_scale;
  p.desired_speed = c.planner.desired_speed;
  p.tracking_weight = c.planner.tracking_weight;
  p.cem = c.planner.cem;
  p.seed = stage_seed(c.seed, Stage::kPlanning);
  p.ttc = c.ttc;
  return p;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(static_cast<int>(detail::parse_int(item)));
    } catch (const ConfigError&) {
      throw UsageError("bad integer list '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("empty integer list");
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(detail::parse_double(item));
    } catch (const ConfigError&) {
      throw UsageError("bad number list '" + s + "'");
    }
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

inline nlohmann::json checkpoint_inputs(const std::vector<std::filesystem::path>& files) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    j[f.filename().string()] = git_blob_hash(ss.str());
  }
  return j;
}

/// Risk levels given on the command line are usage errors when out of range.
inline void check_sigma_arg(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw UsageError("risk level sigma must lie in [0, 1], got " + detail::fmt(s));
}

inline void announce(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
}

/// Runs the command line. Exit codes: 0 success, 1 runtime error, 2 usage.
inline int run_cli(int argc, char** argv) {
  CLI::App app{"riskbias: risk-biased trajectory forecasting and planning"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::string out_dir;
  app.add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--threads", threads, "worker threads (0 = all cores)");
  app.add_option("--output-dir", out_dir, "overrides paths.output_dir");

  std::string flavor = "constant", split = "train";
  int n = 0;
  double speed_scale = 1.0;
  auto* gen = app.add_subcommand("gen-data", "generate a scene dataset");
  gen->add_option("--split", split, "train|val|planning")->check(CLI::IsMember({"train", "val", "planning"}));
  gen->add_option("--n", n, "number of scenes (default from config)");
  gen->add_option("--speed-scale", speed_scale, "pedestrian speed multiplier");

  std::string pipeline = "forecast";
  auto* tcv = app.add_subcommand("train-cvae", "train the forecasting CVAE");
  tcv->add_option("--pipeline", pipeline, "forecast|planning");
  auto* tbs = app.add_subcommand("train-biaser", "train the biased encoder");
  tbs->add_option("--pipeline", pipeline, "forecast|planning");

  auto* evf = app.add_subcommand("eval-forecast", "forecasting and risk error table");
  std::string sigma_list, k_list;
  auto* evr = app.add_subcommand("eval-risk", "risk-estimation error curves");
  evr->add_option("--sigma", sigma_list, "comma-separated risk levels");
  evr->add_option("--k", k_list, "comma-separated sample counts");

  auto* plan = app.add_subcommand("plan", "optimize one robot plan");
  std::string mode = "biased";
  double sigma = 0.95;
  int k = 0;
  std::size_t scene_index = 0;
  plan->add_option("--mode", mode, "biased|risk_sensitive|risk_neutral");
  plan->add_option("--sigma", sigma, "risk level");
  plan->add_option("--k", k, "prediction samples (default planner.n_pred_samples)");
  plan->add_option("--scene", scene_index, "validation scene index");
  plan->add_option("--speed-scale", speed_scale, "pedestrian speed multiplier");

  auto* exp = app.add_subcommand("experiment", "run an experiment suite");
  std::string suite = "all";
  int episodes = 0;
  exp->add_option("--suite", suite, "forecast|risk|planning|all")
      ->check(CLI::IsMember({"forecast", "risk", "planning", "all"}));
  exp->add_option("--episodes", episodes, "planning episodes (default from config)");
  exp->add_option("--speed-scale", speed_scale, "test-time pedestrian speed multiplier");

  auto* cmap = app.add_subcommand("cost-map", "TTC cost map around a robot");
  double robot_speed = 14.0, probe_speed = 2.0, probe_heading = std::numbers::pi / 2;
  GridSpec grid;
  cmap->add_option("--robot-speed", robot_speed);
  cmap->add_option("--probe-speed", probe_speed);
  cmap->add_option("--probe-heading", probe_heading, "radians");
  cmap->add_option("--resolution", grid.resolution, "meters per cell");
  cmap->add_option("--x-min", grid.x_min);
  cmap->add_option("--x-max", grid.x_max);
  cmap->add_option("--y-min", grid.y_min);
  cmap->add_option("--y-max", grid.y_max);

  auto* lmap = app.add_subcommand("latent-map", "latent cost map with biased ellipses");
  int lat_res = 64;
  double extent = 3.0;
  lmap->add_option("--scene", scene_index, "validation scene index");
  lmap->add_option("--sigma", sigma_list, "comma-separated risk levels");
  lmap->add_option("--resolution", lat_res, "cells per axis");
  lmap->add_option("--extent", extent, "half width of the grid in prior standard deviations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help();
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? parse_config_text("") : parse_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.paths.output_dir = out_dir;
    thread_cap() = threads;
    const auto& P = cfg.paths;
    std::filesystem::create_directories(P.output_dir);

    if (*gen) {
      const Stage st = split == "train" ? Stage::kTrainData
                       : split == "val" ? Stage::kValData
                                        : Stage::kPlanningData;
      const RobotFlavor fl =
          split == "planning" ? RobotFlavor::kRandomAccel : RobotFlavor::kConstantVelocity;
      const int count = n > 0 ? n
                        : split == "val" ? cfg.experiments.val_scenes
                                         : cfg.experiments.train_scenes;
      const SimConfig sim = shift_distribution(cfg.sim, speed_scale);
      const Dataset ds = generate_dataset(static_cast<std::size_t>(count), sim, fl,
                                          stage_seed(cfg.seed, st));
      const auto path = P.resolve(split == "train" ? P.train_data
                                  : split == "val" ? P.val_data
                                                   : P.planning_train_data);
      write_dataset(ds, path);
      announce({path});
      return 0;
    }
    if (*tcv || *tbs) {
      announce(train_pipeline_stage(cfg, parse_pipeline(pipeline), static_cast<bool>(*tcv)));
      return 0;
    }

    if (*exp && episodes > 0) cfg.experiments.episodes = episodes;
    if (*exp && exp->count("--speed-scale")) cfg.experiments.test_speed_scale = speed_scale;
    cfg.validate();
    const std::string cfg_text = serialize_config(cfg);

    auto forecast_report = [&](Report& rep, std::vector<std::filesystem::path>& inputs) {
      const PipelineFiles f = pipeline_files(cfg, Pipeline::kForecast);
      const CvaeModel m = load_cvae(cfg, f.cvae);
      const BiaserModel b = load_biaser(f.biaser, m);
      ForecastEvalConfig fc;
      fc.sigmas = cfg.experiments.sigmas;
      fc.k_min = cfg.experiments.k_min;
      fc.risk_k = cfg.experiments.risk_k;
      fc.ref_n = cfg.experiments.ref_samples;
      fc.seed = stage_seed(cfg.seed, Stage::kForecastEval);
      fc.ttc = cfg.ttc;
      rep.forecast = run_forecast_eval(m, b, validation_set(cfg, RobotFlavor::kConstantVelocity), fc);
      inputs.insert(inputs.end(), {f.cvae, f.biaser});
    };
    auto risk_report = [&](Report& rep, std::vector<std::filesystem::path>& inputs) {
      RiskCurveConfig rc;
      rc.sigmas = sigma_list.empty() ? cfg.experiments.risk_sigmas : parse_double_list(sigma_list);
      rc.ks = k_list.empty() ? cfg.experiments.risk_ks : parse_int_list(k_list);
      rc.ref_n = cfg.experiments.ref_samples;
      rc.seed = stage_seed(cfg.seed, Stage::kRiskEval);
      rc.ttc = cfg.ttc;
      for (double s : rc.sigmas) check_sigma_arg(s);
      for (int kk : rc.ks)
        if (kk < 1) throw UsageError("--k entries must be at least 1");
      const PipelineFiles f = pipeline_files(cfg, Pipeline::kForecast);
      const CvaeModel m = load_cvae(cfg, f.cvae);
      const BiaserModel b = load_biaser(f.biaser, m);
      rep.risk_curves = run_risk_curves(m, b, validation_set(cfg, RobotFlavor::kConstantVelocity), rc);
      inputs.insert(inputs.end(), {f.cvae, f.biaser});
    };
    auto planning_report = [&](Report& rep, std::vector<std::filesystem::path>& inputs) {
      const PipelineFiles f = pipeline_files(cfg, Pipeline::kPlanning);
      const CvaeModel m = load_cvae(cfg, f.cvae);
      const BiaserModel b = load_biaser(f.biaser, m);
      rep.planning = run_planning_experiment(m, b, cfg.sim, planning_config(cfg));
      inputs.insert(inputs.end(), {f.cvae, f.biaser});
    };
    auto emit = [&](const Report& rep, const std::vector<std::filesystem::path>& inputs,
                    const std::string& sub) {
      announce(emit_report(rep, P.resolve(sub), cfg_text, cfg.seed, checkpoint_inputs(inputs)));
    };

    if (*evf) {
      Report rep;
      std::vector<std::filesystem::path> inputs;
      forecast_report(rep, inputs);
      emit(rep, inputs, "eval_forecast");
      return 0;
    }
    if (*evr) {
      Report rep;
      std::vector<std::filesystem::path> inputs;
      risk_report(rep, inputs);
      emit(rep, inputs, "eval_risk");
      return 0;
    }
    if (*exp) {
      Report rep;
      std::vector<std::filesystem::path> inputs;
      if (suite == "forecast" || suite == "all") forecast_report(rep, inputs);
      if (suite == "risk" || suite == "all") risk_report(rep, inputs);
      if (suite == "planning" || suite == "all") planning_report(rep, inputs);
      // Shifted runs get their own directory so they never overwrite the nominal one.
      std::string sub = "experiment_" + suite;
      if (cfg.experiments.test_speed_scale != 1.0)
        sub += "_speed" + detail::fmt(cfg.experiments.test_speed_scale);
      emit(rep, inputs, sub);
      return 0;
    }
    if (*plan) {
      const PlanMode pm = parse_plan_mode(mode);
      check_sigma_arg(sigma);
      const PipelineFiles f = pipeline_files(cfg, Pipeline::kPlanning);
      const CvaeModel m = load_cvae(cfg, f.cvae);
      std::optional<BiaserModel> b;
      if (pm == PlanMode::kRiskNeutralBiased) b = load_biaser(f.biaser, m);
      const SimConfig sim = shift_distribution(cfg.sim, speed_scale);
      Rng srng = Rng(stage_seed(cfg.seed, Stage::kPlan)).split(scene_index);
      const Scene scene = sample_scene(sim, RobotFlavor::kConstantVelocity, srng);
      PlanContext ctx = plan_context(scene, cfg.sim.past_steps);
      if (b) ctx.conditioning = b->conditioning;
      const Trajectory ref =
          make_reference(ctx.robot_start(), cfg.planner.desired_speed, cfg.sim.future_steps, cfg.sim.dt);
      PlanObjectiveSpec spec = PlanObjectiveSpec::uniform(
          pm, pm == PlanMode::kRiskNeutralUnbiased ? 0.0 : sigma, cfg.planner.tracking_weight, ref);
      spec.ttc = cfg.ttc;
      CemConfig cem = cfg.planner.cem;
      if (k > 0) cem.n_pred_samples = k;
      Rng prng = Rng(stage_seed(cfg.seed, Stage::kPlan)).split(1'000'000 + scene_index);
      const Predictor pred{&m, b ? &*b : nullptr};
      const PlanResult res = cem_optimize(std::vector<double>(static_cast<std::size_t>(cfg.sim.future_steps), 0.0),
                                          spec, cem, pred, ctx, prng);
      const auto dir = P.resolve("plan");
      std::filesystem::create_directories(dir);
      write_plan_csv(ctx, res, dir / "plan.csv");
      write_plan_summary(res, dir / "plan.json");
      announce({dir / "plan.csv", dir / "plan.json"});
      return 0;
    }
    if (*cmap) {
      const CostGrid g = cost_map({0.0, 0.0}, {robot_speed, 0.0}, probe_speed, probe_heading, grid, cfg.ttc);
      const auto path = P.resolve("cost_map.csv");
      write_cost_map_csv(g, path);
      announce({path});
      return 0;
    }
    if (*lmap) {
      const PipelineFiles f = pipeline_files(cfg, Pipeline::kForecast);
      const CvaeModel m = load_cvae(cfg, f.cvae);
      const BiaserModel b = load_biaser(f.biaser, m);
      const Dataset val = validation_set(cfg, RobotFlavor::kConstantVelocity);
      if (scene_index >= val.scenes.size())
        throw UsageError("scene index " + std::to_string(scene_index) + " out of range");
      const Conditioning c = make_conditioning(val.scenes[scene_index], cfg.sim.past_steps, b.conditioning);
      const DiagonalGaussian prior = encode_prior(m, c.past);
      const auto sd = prior.stddev();
      LatentGridSpec lg;
      lg.resolution = lat_res;
      lg.z1_min = prior.mu(0, 0) - extent * sd[0];
      lg.z1_max = prior.mu(0, 0) + extent * sd[0];
      if (m.latent() == 2) {
        lg.z2_min = prior.mu(0, 1) - extent * sd[1];
        lg.z2_max = prior.mu(0, 1) + extent * sd[1];
      }
      const auto sigmas = sigma_list.empty() ? cfg.experiments.sigmas : parse_double_list(sigma_list);
      for (double s : sigmas) check_sigma_arg(s);
      const LatentCostMap map = latent_cost_map(m, c, lg, &b, sigmas, cfg.ttc);
      const auto csv = P.resolve("latent_map.csv"), json = P.resolve("latent_ellipses.json");
      write_latent_map(map, csv, json);
      announce({csv, json});
      return 0;
    }
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace riskbias
