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

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskbias/biaser.hpp"
#include "riskbias/metrics.hpp"
#include "riskbias/parallel.hpp"
#include "riskbias/planner.hpp"

namespace riskbias {

// ---------------------------------------------------------------------------
// Forecast evaluation

struct ForecastEvalConfig {
  std::vector<double> sigmas = {0.0, 0.3, 0.5, 0.8, 0.95, 1.0};
  int k_min = 16;     // samples for minFDE
  int risk_k = 4;     // biased samples for the risk error
  int ref_n = 4096;   // unbiased samples for the reference risk
  std::uint64_t seed = 0;
  TtcParams ttc;
};

struct ForecastEvalRow {
  std::optional<double> sigma;  // empty for the unbiased model
  Summary minfde;
  Summary fde1;
  std::optional<Summary> risk_err;
  std::optional<Summary> risk_abs_err;
};

namespace detail {

inline Conditioning select_row(const Conditioning& c, std::size_t r) {
  return {row_of(c.past, r), row_of(c.robot, r), row_of(c.robot_features, r), c.dt};
}

/// Decoded forecasts for fixed latent noise (K x L) around `g`.
inline Tensor decode_with_noise(const CvaeModel& m, const Tensor& past, const DiagonalGaussian& g,
                                const Tensor& noise) {
  const std::size_t k = noise.rows();
  DiagonalGaussian rep{repeat_rows(g.mu, k), repeat_rows(g.log_var, k)};
  return decode(m, repeat_rows(past, k), reparameterize(rep, noise));
}

/// Final-position errors of each forecast row against the ground truth.
inline std::vector<double> final_errors(const Tensor& y, const Tensor& gt) {
  const std::size_t w = y.cols();
  std::vector<double> out(y.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double dx = y(i, w - 2) - gt(0, w - 2);
    const double dy = y(i, w - 1) - gt(0, w - 1);
    out[i] = std::hypot(dx, dy);
  }
  return out;
}

}  // namespace detail

/// Table of forecasting error and risk error: an unbiased row followed by
/// one row per risk level. Latent noise is shared across rows (common random
/// numbers) so rows differ only through the latent distribution. FDE(1) is
/// averaged over the k_min single-sample draws.
inline std::vector<ForecastEvalRow> run_forecast_eval(const CvaeModel& m, const BiaserModel& b,
                                                      const Dataset& val,
                                                      const ForecastEvalConfig& cfg) {
  if (val.scenes.empty()) throw UsageError("run_forecast_eval: empty validation set");
  b.check_cvae(m);
  const SceneBatch batch =
      make_batch(std::span<const Scene>(val.scenes), m.dims.past_steps, m.dims.future_steps);
  const Conditioning all = make_conditioning(batch, b.conditioning, val.config.dt);
  const std::size_t n = val.scenes.size();
  const std::size_t ns = cfg.sigmas.size();
  // [row][scene]; row 0 is unbiased.
  std::vector<std::vector<double>> minfde(ns + 1, std::vector<double>(n));
  auto fde1 = minfde;
  auto err = minfde;
  auto abs_err = minfde;
  const Rng root(cfg.seed);
  parallel_for(n, [&](std::size_t i) {
    Rng rng = root.split(i);
    Rng noise_rng = rng.split(0);
    const Tensor noise =
        detail::normal_tensor(static_cast<std::size_t>(cfg.k_min), m.latent(), noise_rng);
    const Conditioning one = detail::select_row(all, i);
    const Tensor gt = row_of(batch.future, i);
    auto score = [&](std::size_t row, const DiagonalGaussian& g) {
      const auto e = detail::final_errors(detail::decode_with_noise(m, one.past, g, noise), gt);
      minfde[row][i] = *std::min_element(e.begin(), e.end());
      fde1[row][i] = mean_cost(e);
    };
    score(0, encode_prior(m, one.past));
    for (std::size_t s = 0; s < ns; ++s) {
      const double sigma = cfg.sigmas[s];
      score(s + 1, encode_biased(b, one, sigma));
      Rng ref_rng = rng.split(1 + 2 * s);
      Rng est_rng = rng.split(2 + 2 * s);
      const double ref =
          risk_target(m, one, 0, sigma, static_cast<std::size_t>(cfg.ref_n), cfg.ttc, ref_rng);
      const double est = biased_risk_estimate(m, b, one, 0, sigma,
                                              static_cast<std::size_t>(cfg.risk_k), cfg.ttc, est_rng);
      err[s + 1][i] = est - ref;
      abs_err[s + 1][i] = std::abs(est - ref);
    }
  });
  std::vector<ForecastEvalRow> rows;
  for (std::size_t r = 0; r <= ns; ++r) {
    ForecastEvalRow row;
    if (r > 0) {
      row.sigma = cfg.sigmas[r - 1];
      row.risk_err = summarize(err[r]);
      row.risk_abs_err = summarize(abs_err[r]);
    }
    row.minfde = summarize(minfde[r]);
    row.fde1 = summarize(fde1[r]);
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Risk-estimation curves

struct RiskCurveConfig {
  std::vector<double> sigmas = {0.95};
  std::vector<int> ks = {1, 2, 4, 8, 16};
  int ref_n = 4096;
  std::uint64_t seed = 0;
  TtcParams ttc;
};

struct RiskCurveRow {
  std::string method;  // "biased" or "unbiased"
  double sigma = 0.0;
  int k = 0;
  Summary err;
  double q05 = 0.0;
  double q95 = 0.0;
};

/// Per-scene errors of both estimators against a shared reference.
struct RiskErrorSamples {
  std::vector<double> biased;
  std::vector<double> unbiased;
};

/// Signed errors of the biased mean (K samples) and of the unbiased
/// Monte-Carlo CVaR (K samples) against the ref_n-sample unbiased
/// reference, one entry per validation scene.
inline RiskErrorSamples risk_error_samples(const CvaeModel& m, const BiaserModel& b,
                                           const Conditioning& all, double sigma, int k, int ref_n,
                                           const TtcParams& p, const Rng& root) {
  const std::size_t n = all.past.rows();
  RiskErrorSamples out{std::vector<double>(n), std::vector<double>(n)};
  parallel_for(n, [&](std::size_t i) {
    Rng rng = root.split(i);
    Rng ref_rng = rng.split(0);
    Rng b_rng = rng.split(1);
    Rng u_rng = rng.split(2);
    const Conditioning one = detail::select_row(all, i);
    const double ref = risk_target(m, one, 0, sigma, static_cast<std::size_t>(ref_n), p, ref_rng);
    out.biased[i] =
        biased_risk_estimate(m, b, one, 0, sigma, static_cast<std::size_t>(k), p, b_rng) - ref;
    out.unbiased[i] =
        cvar_mc(unbiased_costs(m, one, 0, static_cast<std::size_t>(k), p, u_rng), sigma) - ref;
  });
  return out;
}

inline std::vector<RiskCurveRow> run_risk_curves(const CvaeModel& m, const BiaserModel& b,
                                                 const Dataset& val, const RiskCurveConfig& cfg) {
  if (val.scenes.empty()) throw UsageError("run_risk_curves: empty validation set");
  b.check_cvae(m);
  const SceneBatch batch =
      make_batch(std::span<const Scene>(val.scenes), m.dims.past_steps, m.dims.future_steps);
  const Conditioning all = make_conditioning(batch, b.conditioning, val.config.dt);
  std::vector<RiskCurveRow> rows;
  const Rng root(cfg.seed);
  for (std::size_t s = 0; s < cfg.sigmas.size(); ++s) {
    for (std::size_t ki = 0; ki < cfg.ks.size(); ++ki) {
      if (cfg.ks[ki] < 1) throw UsageError("run_risk_curves: K must be >= 1");
      // The reference stream depends on the scene only, so every K shares it.
      const RiskErrorSamples e = risk_error_samples(m, b, all, cfg.sigmas[s], cfg.ks[ki],
                                                    cfg.ref_n, cfg.ttc, root.split(s));
      for (const auto& [name, v] : {std::pair{"biased", &e.biased}, {"unbiased", &e.unbiased}})
        rows.push_back({name, cfg.sigmas[s], cfg.ks[ki], summarize(*v), quantile(*v, 0.05),
                        quantile(*v, 0.95)});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Planning experiment

struct PlanningConfig {
  int episodes = 100;
  std::vector<double> sigmas = {0.8, 0.95};
  std::vector<int> ks = {1, 2, 4, 16, 64};
  int neutral_k = 64;         // risk-neutral unbiased baseline
  double speed_scale = 1.0;   // test-time pedestrian speed multiplier
  double desired_speed = 14.0;
  double tracking_weight = 1e-5;
  CemConfig cem;
  std::uint64_t seed = 0;
  TtcParams ttc;
};

struct PlanningRow {
  PlanMode mode = PlanMode::kRiskNeutralBiased;
  double sigma = 0.0;
  int k = 0;
  Summary ttc;
  Summary tracking;
  std::vector<double> ttc_values;  // per episode, episode order
  std::vector<double> tracking_values;
};

struct EpisodeOutcome {
  double ttc = 0.0;
  double tracking = 0.0;
};

/// Optimizes a plan for one scene and scores the executed trajectory
/// against the realized pedestrian future.
inline EpisodeOutcome run_episode(const Scene& scene, PlanMode mode, double sigma, int k,
                                  const PlanningConfig& cfg, const Predictor& pred, Rng& rng) {
  const int past = pred.cvae->dims.past_steps;
  const int steps = pred.cvae->dims.future_steps;
  PlanContext ctx = plan_context(scene, past);
  if (pred.biaser) ctx.conditioning = pred.biaser->conditioning;
  const Trajectory ref = make_reference(ctx.robot_start(), cfg.desired_speed, steps, scene.x.dt);
  PlanObjectiveSpec spec = PlanObjectiveSpec::uniform(mode, sigma, cfg.tracking_weight, ref);
  spec.ttc = cfg.ttc;
  CemConfig cem = cfg.cem;
  cem.n_pred_samples = k;
  const std::vector<double> init(static_cast<std::size_t>(steps), 0.0);
  const PlanResult plan = cem_optimize(init, spec, cem, pred, ctx, rng);
  return {trajectory_ttc_cost(scene.y, plan.trajectory, cfg.ttc),
          tracking_cost(plan.trajectory, ref, spec.q)};
}

/// Episodes are shared by every (mode, sigma, K) cell, and each episode's
/// planner stream depends on the episode only, so cells are paired.
inline std::vector<PlanningRow> run_planning_experiment(const CvaeModel& m, const BiaserModel& b,
                                                        const SimConfig& sim,
                                                        const PlanningConfig& cfg) {
  if (cfg.episodes < 1) throw UsageError("run_planning_experiment: episodes must be >= 1");
  b.check_cvae(m);
  const SimConfig test = shift_distribution(sim, cfg.speed_scale);
  const auto n = static_cast<std::size_t>(cfg.episodes);
  std::vector<Scene> scenes(n);
  const Rng root(cfg.seed);
  for (std::size_t e = 0; e < n; ++e) {
    Rng r = root.split(e).split(0);
    scenes[e] = sample_scene(test, RobotFlavor::kConstantVelocity, r);
  }
  struct Cell {
    PlanMode mode;
    double sigma;
    int k;
  };
  std::vector<Cell> cells{{PlanMode::kRiskNeutralUnbiased, 0.0, cfg.neutral_k}};
  for (double s : cfg.sigmas)
    for (int k : cfg.ks) {
      cells.push_back({PlanMode::kRiskSensitiveUnbiased, s, k});
      cells.push_back({PlanMode::kRiskNeutralBiased, s, k});
    }
  std::vector<PlanningRow> rows;
  for (const Cell& c : cells) {
    PlanningRow row;
    row.mode = c.mode;
    row.sigma = c.sigma;
    row.k = c.k;
    row.ttc_values.resize(n);
    row.tracking_values.resize(n);
    const Predictor pred{&m, c.mode == PlanMode::kRiskNeutralBiased ? &b : nullptr};
    // Parallelism lives inside CEM; episodes run in order.
    for (std::size_t e = 0; e < n; ++e) {
      Rng r = root.split(e).split(1);
      const EpisodeOutcome o = run_episode(scenes[e], c.mode, c.sigma, c.k, cfg, pred, r);
      row.ttc_values[e] = o.ttc;
      row.tracking_values[e] = o.tracking;
    }
    row.ttc = summarize(row.ttc_values);
    row.tracking = summarize(row.tracking_values);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const PlanningRow& find_row(const std::vector<PlanningRow>& rows, PlanMode mode,
                                   double sigma, int k) {
  for (const auto& r : rows)
    if (r.mode == mode && r.k == k && (mode == PlanMode::kRiskNeutralUnbiased || r.sigma == sigma))
      return r;
  throw UsageError("planning report has no row " + to_string(mode) + " sigma=" +
                   std::to_string(sigma) + " K=" + std::to_string(k));
}

// ---------------------------------------------------------------------------
// Reports

/// Git blob hash (SHA-1 over "blob <len>\0" + content), lowercase hex.
inline std::string git_blob_hash(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw Error("sha1 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

struct Report {
  std::vector<ForecastEvalRow> forecast;
  std::vector<RiskCurveRow> risk_curves;
  std::vector<PlanningRow> planning;

  bool empty() const { return forecast.empty() && risk_curves.empty() && planning.empty(); }
};

inline std::string forecast_csv(const std::vector<ForecastEvalRow>& rows) {
  std::ostringstream os;
  os << "sigma,minfde16,fde1,risk_err4,risk_abs_err4,se_minfde16,se_fde1,se_risk_err4,"
        "se_risk_abs_err4\n";
  const double na = std::nan("");
  for (const auto& r : rows) {
    os << (r.sigma ? detail::fmt(*r.sigma) : "unbiased") << ',' << detail::fmt(r.minfde.mean) << ','
       << detail::fmt(r.fde1.mean) << ',' << detail::fmt(r.risk_err ? r.risk_err->mean : na) << ','
       << detail::fmt(r.risk_abs_err ? r.risk_abs_err->mean : na) << ','
       << detail::fmt(r.minfde.se) << ',' << detail::fmt(r.fde1.se) << ','
       << detail::fmt(r.risk_err ? r.risk_err->se : na) << ','
       << detail::fmt(r.risk_abs_err ? r.risk_abs_err->se : na) << '\n';
  }
  return os.str();
}

inline std::string risk_curves_csv(const std::vector<RiskCurveRow>& rows) {
  std::ostringstream os;
  os << "method,sigma,K,err_mean,err_q05,err_q95,err_se\n";
  for (const auto& r : rows)
    os << r.method << ',' << detail::fmt(r.sigma) << ',' << r.k << ',' << detail::fmt(r.err.mean)
       << ',' << detail::fmt(r.q05) << ',' << detail::fmt(r.q95) << ',' << detail::fmt(r.err.se)
       << '\n';
  return os.str();
}

inline std::string planning_csv(const std::vector<PlanningRow>& rows) {
  std::ostringstream os;
  os << "mode,sigma,K,ttc_mean,ttc_ci,track_mean,track_ci,n_episodes\n";
  for (const auto& r : rows)
    os << to_string(r.mode) << ','
       << (r.mode == PlanMode::kRiskNeutralUnbiased ? "NA" : detail::fmt(r.sigma)) << ',' << r.k
       << ',' << detail::fmt(r.ttc.mean) << ',' << detail::fmt(r.ttc.ci95) << ','
       << detail::fmt(r.tracking.mean) << ',' << detail::fmt(r.tracking.ci95) << ',' << r.ttc.n
       << '\n';
  return os.str();
}

/// Per-episode outcomes; episodes are paired across rows.
inline std::string planning_episodes_csv(const std::vector<PlanningRow>& rows) {
  std::ostringstream os;
  os << "mode,sigma,K,episode,ttc,track\n";
  for (const auto& r : rows) {
    const std::string sigma =
        r.mode == PlanMode::kRiskNeutralUnbiased ? "NA" : detail::fmt(r.sigma);
    for (std::size_t e = 0; e < r.ttc_values.size(); ++e)
      os << to_string(r.mode) << ',' << sigma << ',' << r.k << ',' << e << ','
         << detail::fmt(r.ttc_values[e]) << ',' << detail::fmt(r.tracking_values[e]) << '\n';
  }
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

/// Writes one CSV per non-empty table and manifest.json holding the seed,
/// the git-style hash of `config_text`, and each file's hash. Returns the
/// paths written.
inline std::vector<std::filesystem::path> emit_report(const Report& report,
                                                      const std::filesystem::path& dir,
                                                      const std::string& config_text,
                                                      std::uint64_t seed,
                                                      const nlohmann::json& inputs = {}) {
  if (report.empty()) throw UsageError("emit_report: report is empty");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::pair<std::string, std::string>> files;
  if (!report.forecast.empty()) files.emplace_back("forecast_eval.csv", forecast_csv(report.forecast));
  if (!report.risk_curves.empty())
    files.emplace_back("risk_curves.csv", risk_curves_csv(report.risk_curves));
  if (!report.planning.empty()) {
    files.emplace_back("planning.csv", planning_csv(report.planning));
    files.emplace_back("planning_episodes.csv", planning_episodes_csv(report.planning));
  }
  nlohmann::json manifest;
  manifest["seed"] = seed;
  manifest["config_hash"] = git_blob_hash(config_text);
  if (!inputs.is_null()) manifest["inputs"] = inputs;
  std::vector<std::filesystem::path> written;
  for (const auto& [name, text] : files) {
    write_text(dir / name, text);
    manifest["files"][name] = git_blob_hash(text);
    written.push_back(dir / name);
  }
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  written.push_back(dir / "manifest.json");
  return written;
}

}  // namespace riskbias
