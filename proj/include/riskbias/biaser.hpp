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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskbias/autodiff.hpp"
#include "riskbias/cvae.hpp"
#include "riskbias/parallel.hpp"
#include "riskbias/risk.hpp"
#include "riskbias/ttc.hpp"

namespace riskbias {

/// Which part of the robot trajectory the biased encoder sees.
enum class RobotConditioning { kFuture, kPast };

inline std::string to_string(RobotConditioning c) {
  return c == RobotConditioning::kFuture ? "future" : "past";
}

inline RobotConditioning parse_robot_conditioning(const std::string& s) {
  if (s == "future") return RobotConditioning::kFuture;
  if (s == "past") return RobotConditioning::kPast;
  throw UsageError("unknown robot conditioning '" + s + "' (expected future|past)");
}

/// Inputs needed to bias one or more forecasts, in the pedestrian-relative
/// frame. `robot` is the robot future the cost is measured against and
/// `robot_features` what the biased encoder receives.
struct Conditioning {
  Tensor past;            // B x 2P
  Tensor robot;           // B x 2F
  Tensor robot_features;  // B x 2F or B x 2P, scaled
  double dt = 0.1;
};

inline Conditioning make_conditioning(const SceneBatch& b, RobotConditioning mode, double dt) {
  Conditioning c;
  c.past = b.past;
  c.robot = b.robot;
  const Tensor& src = mode == RobotConditioning::kFuture ? b.robot : b.robot_past;
  c.robot_features = Tensor(Matrix(src.matrix() * kRobotFeatureScale));
  c.dt = dt;
  return c;
}

/// Conditioning for a single scene with an arbitrary robot trajectory
/// (robot_past positions end at t = 0, robot_future starts at t = dt).
inline Conditioning make_conditioning(const Trajectory& x, const Trajectory& robot_past,
                                      const Trajectory& robot_future, RobotConditioning mode) {
  Conditioning c;
  c.dt = x.dt;
  c.past = past_row(x);
  c.robot = relative_row(robot_future, x.back());
  const Tensor f =
      relative_row(mode == RobotConditioning::kFuture ? robot_future : robot_past, x.back());
  c.robot_features = Tensor(Matrix(f.matrix() * kRobotFeatureScale));
  return c;
}

inline Conditioning make_conditioning(const Scene& s, int past_steps, RobotConditioning mode) {
  Trajectory rp;
  rp.dt = s.y_robot.dt;
  rp.positions.assign(s.y_robot.positions.begin(), s.y_robot.positions.begin() + past_steps);
  return make_conditioning(s.x, rp, s.robot_future(past_steps), mode);
}

/// Biased latent encoder q_psi(z | x, sigma, robot).
struct BiaserModel {
  CvaeDims dims;
  RobotConditioning conditioning = RobotConditioning::kFuture;
  MlpParams encoder;
  std::uint64_t cvae_hash = 0;

  std::size_t robot_width() const {
    return 2 * static_cast<std::size_t>(conditioning == RobotConditioning::kFuture
                                            ? dims.future_steps
                                            : dims.past_steps);
  }

  static std::vector<std::size_t> layer_dims(const CvaeDims& d, RobotConditioning c) {
    const std::size_t h = static_cast<std::size_t>(d.hidden);
    const std::size_t p = 2 * static_cast<std::size_t>(d.past_steps);
    const std::size_t r =
        2 * static_cast<std::size_t>(c == RobotConditioning::kFuture ? d.future_steps
                                                                      : d.past_steps);
    return {p + 1 + r, h, h, 2 * static_cast<std::size_t>(d.latent_dim)};
  }

  static BiaserModel create(const CvaeModel& cvae, RobotConditioning c, Rng& rng) {
    return {cvae.dims, c, MlpParams::glorot(layer_dims(cvae.dims, c), rng),
            parameter_hash(cvae)};
  }

  /// Starts at the inferred prior: past columns and deeper layers copy the
  /// prior network, the sigma and robot columns start at zero.
  static BiaserModel from_prior(const CvaeModel& cvae, RobotConditioning c) {
    BiaserModel b{cvae.dims, c, cvae.prior, parameter_hash(cvae)};
    const Tensor& w0 = cvae.prior.layers[0].weight;
    const auto dims = layer_dims(cvae.dims, c);
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(w0.rows()),
                            static_cast<Eigen::Index>(dims[0]));
    w.leftCols(static_cast<Eigen::Index>(w0.cols())) = w0.matrix();
    b.encoder.layers[0].weight = Tensor(std::move(w));
    return b;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.kind = "biaser";
    c.meta = {{"past_steps", dims.past_steps},
              {"future_steps", dims.future_steps},
              {"latent_dim", dims.latent_dim},
              {"hidden", dims.hidden},
              {"conditioning", to_string(conditioning)},
              {"cvae_hash", cvae_hash}};
    c.nets = {{"encoder", encoder}};
    return c;
  }

  static BiaserModel from_checkpoint(const Checkpoint& c) {
    if (c.kind != "biaser") throw MismatchError("checkpoint kind '" + c.kind + "' is not biaser");
    BiaserModel m;
    try {
      m.dims.past_steps = c.meta.at("past_steps").get<int>();
      m.dims.future_steps = c.meta.at("future_steps").get<int>();
      m.dims.latent_dim = c.meta.at("latent_dim").get<int>();
      m.dims.hidden = c.meta.at("hidden").get<int>();
      m.conditioning = parse_robot_conditioning(c.meta.at("conditioning").get<std::string>());
      m.cvae_hash = c.meta.at("cvae_hash").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("biaser checkpoint meta: ") + e.what());
    }
    m.encoder = c.net("encoder");
    if (m.encoder.dims() != layer_dims(m.dims, m.conditioning))
      throw MismatchError("biaser checkpoint layers do not match its metadata");
    return m;
  }

  void save(const std::filesystem::path& path) const { save_checkpoint(to_checkpoint(), path); }
  static BiaserModel load(const std::filesystem::path& path) {
    return from_checkpoint(load_checkpoint(path));
  }

  /// Throws MismatchError unless this biaser was trained on `cvae`.
  void check_cvae(const CvaeModel& cvae) const {
    if (!(cvae.dims == dims) || parameter_hash(cvae) != cvae_hash)
      throw MismatchError("biaser was trained against a different cvae checkpoint");
  }

  friend bool operator==(const BiaserModel& a, const BiaserModel& b) {
    return a.dims == b.dims && a.conditioning == b.conditioning && a.encoder == b.encoder &&
           a.cvae_hash == b.cvae_hash;
  }
};

namespace detail {

inline void check_sigma(double sigma) {
  if (!(sigma >= 0.0 && sigma <= 1.0))
    throw DomainError("risk level sigma must lie in [0, 1], got " + std::to_string(sigma));
}

inline Tensor biaser_input(const BiaserModel& b, const Tensor& past, const Tensor& sigma,
                           const Tensor& robot_features) {
  if (robot_features.cols() != b.robot_width())
    throw DimensionError("biased encoder expects robot features of width " +
                         std::to_string(b.robot_width()) + ", got " +
                         std::to_string(robot_features.cols()));
  // Robot features enter scaled by sigma: at sigma = 0 the target is the
  // unbiased mean for every robot, so the robot is hidden from the encoder.
  Matrix m(past.matrix().rows(), past.matrix().cols() + 1 + robot_features.matrix().cols());
  m << past.matrix(), sigma.matrix(),
      robot_features.matrix().array().colwise() * sigma.matrix().col(0).array();
  return Tensor(std::move(m));
}

inline Tensor sigma_column(std::size_t rows, double sigma) { return Tensor(rows, 1, sigma); }

}  // namespace detail

/// Biased latent Gaussian per conditioning row.
inline DiagonalGaussian encode_biased(const BiaserModel& b, const Conditioning& c, double sigma) {
  detail::check_sigma(sigma);
  const Tensor in =
      detail::biaser_input(b, c.past, detail::sigma_column(c.past.rows(), sigma), c.robot_features);
  return detail::split_gaussian(mlp_eval(b.encoder, in), static_cast<std::size_t>(b.dims.latent_dim));
}

inline GaussianVars encode_biased(Tape& t, const BiaserModel& b, Var input, bool trainable) {
  return detail::split_gaussian(t, mlp_forward(t, b.encoder, input, trainable),
                                static_cast<std::size_t>(b.dims.latent_dim));
}

/// TTC cost of each forecast row against a single robot row.
inline std::vector<double> forecast_costs(const Tensor& forecasts, const Tensor& robot_row,
                                          double dt, const TtcParams& p) {
  if (robot_row.rows() != 1 || robot_row.cols() != forecasts.cols())
    throw DimensionError("forecast_costs: robot " + shape_string(robot_row) + " vs forecasts " +
                         shape_string(forecasts));
  std::vector<double> out(forecasts.rows());
  const std::size_t w = forecasts.cols();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = trajectory_ttc_cost(std::span<const double>(forecasts.matrix().data() + i * w, w),
                                 robot_row.data(), dt, p);
  return out;
}

inline Tensor row_of(const Tensor& t, std::size_t r) {
  return Tensor(Matrix(t.matrix().row(static_cast<Eigen::Index>(r))));
}

/// K decoded forecasts (relative frame) for conditioning row `r`, with
/// latents drawn from `g` row `r`.
inline Tensor decode_samples(const CvaeModel& m, const Tensor& past_row_r,
                             const DiagonalGaussian& g, std::size_t r, std::size_t k, Rng& rng) {
  DiagonalGaussian rep{detail::repeat_rows(row_of(g.mu, r), k),
                       detail::repeat_rows(row_of(g.log_var, r), k)};
  const Tensor eps = detail::normal_tensor(k, m.latent(), rng);
  return decode(m, detail::repeat_rows(past_row_r, k), reparameterize(rep, eps));
}

/// Costs of N unbiased forecasts for conditioning row `r`.
inline std::vector<double> unbiased_costs(const CvaeModel& m, const Conditioning& c, std::size_t r,
                                          std::size_t n, const TtcParams& p, Rng& rng) {
  if (n == 0) throw UsageError("sample count must be at least 1");
  const Tensor past = row_of(c.past, r);
  const DiagonalGaussian prior = encode_prior(m, past);
  return forecast_costs(decode_samples(m, past, prior, 0, n, rng), row_of(c.robot, r), c.dt, p);
}

/// Costs of K biased forecasts for conditioning row `r`.
inline std::vector<double> biased_costs(const CvaeModel& m, const BiaserModel& b,
                                        const Conditioning& c, std::size_t r, double sigma,
                                        std::size_t k, const TtcParams& p, Rng& rng) {
  if (k == 0) throw UsageError("sample count must be at least 1");
  Conditioning one{row_of(c.past, r), row_of(c.robot, r), row_of(c.robot_features, r), c.dt};
  const DiagonalGaussian g = encode_biased(b, one, sigma);
  return forecast_costs(decode_samples(m, one.past, g, 0, k, rng), one.robot, c.dt, p);
}

/// Monte-Carlo CVaR of the TTC cost under the unbiased forecasts.
inline double risk_target(const CvaeModel& m, const Conditioning& c, std::size_t r, double sigma,
                          std::size_t n, const TtcParams& p, Rng& rng) {
  detail::check_sigma(sigma);
  return cvar_mc(unbiased_costs(m, c, r, n, p, rng), sigma);
}

/// Mean TTC cost of K biased forecasts.
inline double biased_risk_estimate(const CvaeModel& m, const BiaserModel& b, const Conditioning& c,
                                   std::size_t r, double sigma, std::size_t k, const TtcParams& p,
                                   Rng& rng) {
  return mean_cost(biased_costs(m, b, c, r, sigma, k, p, rng));
}

struct BiasLossTerms {
  Var loss;
  Var kl;       // batch mean KL(q_psi || prior)
  Var penalty;  // batch mean squared constraint residual estimate (unweighted)
  Var expected_cost;  // B x 1
};

/// Penalized objective for one batch:
///   mean_b KL(q_psi(z | x_b, sigma_b, r_b) || q(z | x_b))
///     + beta_c * mean_b (E_q[J(g(z, x_b))] - target_b)^2,
/// with the expectation estimated from M reparameterized samples per row.
/// For even M the squared residual is estimated by the product of the two
/// half-sample residuals, which is unbiased; squaring the M-sample mean would
/// add its variance and reward shrinking q regardless of the constraint.
/// `noise` is (B * M) x L with rows grouped by batch element, `sigmas` is B x 1.
///
/// When `prior_means` (one estimate of E_p[J] per row) is given, each sample
/// cost J(q, eps) is replaced by J(q, eps) - J(p, eps) + prior_mean, a control
/// variate with the same expectation whose noise vanishes as q approaches p.
inline BiasLossTerms bias_loss(Tape& t, const BiaserModel& b, const CvaeModel& m,
                               const Conditioning& c, const Tensor& sigmas,
                               std::span<const double> targets, const Tensor& noise,
                               std::size_t inner_samples, double beta_c, const TtcParams& p,
                               std::span<const double> prior_means = {}) {
  const std::size_t rows = c.past.rows();
  if (targets.size() != rows || sigmas.rows() != rows || sigmas.cols() != 1)
    throw DimensionError("bias_loss: targets and sigmas must have one entry per row");
  if (!prior_means.empty() && prior_means.size() != rows)
    throw DimensionError("bias_loss: prior means must have one entry per row");
  if (inner_samples == 0 || noise.rows() != rows * inner_samples || noise.cols() != m.latent())
    throw DimensionError("bias_loss: noise must be (B * M) x latent_dim");
  Var x = t.constant(c.past);
  Var in = t.constant(detail::biaser_input(b, c.past, sigmas, c.robot_features));
  GaussianVars q = encode_biased(t, b, in, true);
  GaussianVars prior = encode_prior(t, m, x, false);
  Var kl = ad::mean(t, kl_diag_gaussians(t, q, prior));

  const std::size_t k = inner_samples;
  GaussianVars rep{ad::repeat_rows(t, q.mu, k), ad::repeat_rows(t, q.log_var, k)};
  Var z = reparameterize(t, rep, t.constant(noise));
  Var y = decode(t, m, t.constant(detail::repeat_rows(c.past, k)), z, false);
  const Tensor robot_rep = detail::repeat_rows(c.robot, k);
  Var cost = ad::ttc_cost(t, y, robot_rep, c.dt, p);
  if (!prior_means.empty()) {
    const Tensor past_rep = detail::repeat_rows(c.past, k);
    const DiagonalGaussian g = encode_prior(m, past_rep);
    const Tensor y0 = decode(m, past_rep, reparameterize(g, noise));
    const std::size_t w = y0.cols();
    Tensor shift(rows * k, 1);
    for (std::size_t i = 0; i < rows * k; ++i)
      shift(i, 0) = prior_means[i / k] -
                    trajectory_ttc_cost(y0.data().subspan(i * w, w),
                                        robot_rep.data().subspan(i * w, w), c.dt, p);
    cost = ad::add(t, cost, t.constant(shift));
  }
  Var expected = ad::group_mean_rows(t, cost, k);
  Tensor tgt(rows, 1);
  std::copy(targets.begin(), targets.end(), tgt.data().begin());
  Var penalty = ad::mean(t, ad::square(t, ad::sub(t, expected, t.constant(tgt))));
  if (k >= 2 && k % 2 == 0) {
    // (a - T)(b - T) for the two half-sample means equals (E - T)^2 - ((a - b) / 2)^2.
    Var halves = ad::group_mean_rows(t, cost, k / 2);
    Var dev = ad::sub(t, halves, ad::repeat_rows(t, expected, 2));
    penalty = ad::sub(t, penalty, ad::mean(t, ad::square(t, dev)));
  }
  Var loss = ad::add(t, kl, ad::scale(t, penalty, beta_c));
  return {loss, kl, penalty, expected};
}

struct BiasTrainConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 3e-3;
  double final_lr_fraction = 0.03;  // linear decay over epochs
  double penalty_weight = 1e4;
  int target_samples_phase1 = 64;
  int target_samples_phase2 = 256;
  double phase1_fraction = 0.5;
  int inner_samples = 16;
  bool control_variate = true;
  double sigma_grid_prob = 0.2;
  std::vector<double> sigma_grid = {0.0, 0.3, 0.5, 0.8, 0.95, 1.0};
  RobotConditioning conditioning = RobotConditioning::kFuture;
  TtcParams ttc;

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("biaser: epochs and batch size must be >= 1");
    if (target_samples_phase1 < 1 || target_samples_phase2 < 1 || inner_samples < 1)
      throw ConfigError("biaser: sample counts must be >= 1");
    if (!(penalty_weight > 0.0)) throw ConfigError("biaser: penalty weight must be positive");
    if (!(learning_rate > 0.0) || !(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
      throw ConfigError("biaser: learning rate must be positive, final fraction in (0, 1]");
    if (!(sigma_grid_prob >= 0.0 && sigma_grid_prob <= 1.0))
      throw ConfigError("biaser: sigma grid probability must lie in [0, 1]");
    if (sigma_grid.empty() && sigma_grid_prob > 0.0)
      throw ConfigError("biaser: sigma grid is empty");
    for (double s : sigma_grid) detail::check_sigma(s);
    ttc.validate();
  }
};

struct BiasCurveRow {
  int epoch = 0;
  double loss = 0.0;
  double kl = 0.0;
  double residual = 0.0;  // mean |E_q[J] - target|
  int target_samples = 0;
};

inline void write_biaser_curve_csv(const std::vector<BiasCurveRow>& rows,
                                   const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(10);
  os << "epoch,loss,kl,abs_residual,target_samples\n";
  for (const auto& r : rows)
    os << r.epoch << ',' << r.loss << ',' << r.kl << ',' << r.residual << ',' << r.target_samples
       << '\n';
}

/// Risk level for one batch: with probability `sigma_grid_prob` a grid value,
/// otherwise Uniform(0, 1).
inline double draw_training_sigma(const BiasTrainConfig& cfg, Rng& rng) {
  if (!cfg.sigma_grid.empty() && rng.uniform() < cfg.sigma_grid_prob) {
    const auto i = static_cast<std::size_t>(rng() % cfg.sigma_grid.size());
    return cfg.sigma_grid[i];
  }
  return rng.uniform();
}

using BiasProgressFn = std::function<void(const BiasCurveRow&)>;

/// Trains the biased encoder against a frozen CVAE. Risk targets are
/// recomputed for every batch from fresh unbiased samples.
inline BiaserModel train_biaser(const CvaeModel& cvae, const Dataset& data,
                                const BiasTrainConfig& cfg, Rng& rng,
                                std::vector<BiasCurveRow>* curve = nullptr,
                                const BiasProgressFn& progress = nullptr) {
  cfg.validate();
  if (data.scenes.empty()) throw UsageError("train_biaser: empty dataset");
  const std::uint64_t frozen = parameter_hash(cvae);
  BiaserModel model = BiaserModel::from_prior(cvae, cfg.conditioning);
  std::vector<ParamRef> params = model.encoder.parameters("encoder");
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  OptimState state = OptimState::for_params(params, adam);

  const int P = cvae.dims.past_steps;
  const SceneBatch all =
      make_batch(std::span<const Scene>(data.scenes), P, cvae.dims.future_steps);
  const Conditioning full = make_conditioning(all, cfg.conditioning, data.config.dt);
  const std::size_t n = data.scenes.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const std::size_t batches = (n + bs - 1) / bs;
  const std::size_t m = static_cast<std::size_t>(cfg.inner_samples);
  const int phase1_epochs =
      static_cast<int>(std::round(cfg.phase1_fraction * static_cast<double>(cfg.epochs)));
  std::vector<Tensor> grads(params.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::size_t target_n = static_cast<std::size_t>(
        epoch < phase1_epochs ? cfg.target_samples_phase1 : cfg.target_samples_phase2);
    const double progress_frac =
        cfg.epochs == 1 ? 0.0 : static_cast<double>(epoch) / (cfg.epochs - 1);
    state.config.learning_rate =
        cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress_frac);
    Rng epoch_rng = rng.split(1 + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(n, epoch_rng);
    double sum_loss = 0.0, sum_kl = 0.0, sum_res = 0.0;
    for (std::size_t bi = 0; bi < batches; ++bi) {
      Rng batch_rng = epoch_rng.split(1 + bi);
      const std::size_t lo = bi * bs;
      const std::size_t hi = std::min(n, lo + bs);
      const std::size_t rows = hi - lo;
      Conditioning c;
      c.dt = full.dt;
      c.past = Tensor(rows, full.past.cols());
      c.robot = Tensor(rows, full.robot.cols());
      c.robot_features = Tensor(rows, full.robot_features.cols());
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = static_cast<Eigen::Index>(order[lo + r]);
        const auto dst = static_cast<Eigen::Index>(r);
        c.past.matrix().row(dst) = full.past.matrix().row(src);
        c.robot.matrix().row(dst) = full.robot.matrix().row(src);
        c.robot_features.matrix().row(dst) = full.robot_features.matrix().row(src);
      }
      Rng draw = batch_rng.split(0);
      const double sigma = draw_training_sigma(cfg, draw);
      std::vector<double> targets(rows), prior_means(rows);
      parallel_for(rows, [&](std::size_t r) {
        Rng tr = batch_rng.split(1 + r);
        const auto costs = unbiased_costs(cvae, c, r, target_n, cfg.ttc, tr);
        targets[r] = cvar_mc(costs, sigma);
        prior_means[r] = mean_cost(costs);
      });
      const Tensor noise = detail::normal_tensor(rows * m, cvae.latent(), draw);
      Tape tape;
      BiasLossTerms terms =
          bias_loss(tape, model, cvae, c, detail::sigma_column(rows, sigma), targets, noise, m,
                    cfg.penalty_weight, cfg.ttc,
                    cfg.control_variate ? std::span<const double>(prior_means)
                                        : std::span<const double>());
      const double loss = tape.value(terms.loss)(0, 0);
      if (!std::isfinite(loss))
        throw TrainingError("train_biaser: loss diverged at epoch " + std::to_string(epoch));
      tape.backward(terms.loss);
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] = tape.param_grad(*params[i].value);
      adam_step(params, grads, state);
      const Tensor& e = tape.value(terms.expected_cost);
      double res = 0.0;
      for (std::size_t r = 0; r < rows; ++r) res += std::abs(e(r, 0) - targets[r]);
      const double w = static_cast<double>(rows);
      sum_loss += loss * w;
      sum_kl += tape.value(terms.kl)(0, 0) * w;
      sum_res += res;
    }
    BiasCurveRow row{epoch, sum_loss / n, sum_kl / n, sum_res / n, static_cast<int>(target_n)};
    if (curve) curve->push_back(row);
    if (progress) progress(row);
  }
  if (parameter_hash(cvae) != frozen)
    throw TrainingError("train_biaser: cvae parameters changed during training");
  return model;
}

/// Biased forecasts in world coordinates.
inline std::vector<Trajectory> sample_biased_forecasts(const CvaeModel& m, const BiaserModel& b,
                                                       const Conditioning& c, const Vec2& origin,
                                                       double sigma, std::size_t k, Rng& rng) {
  if (k == 0) throw UsageError("sample_biased_forecasts: K must be at least 1");
  Conditioning one{row_of(c.past, 0), row_of(c.robot, 0), row_of(c.robot_features, 0), c.dt};
  const DiagonalGaussian g = encode_biased(b, one, sigma);
  const Tensor y = decode_samples(m, one.past, g, 0, k, rng);
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(Trajectory::from_flat(
        std::span<const double>(y.matrix().data() + i * y.cols(), y.cols()), c.dt, origin));
  return out;
}

}  // namespace riskbias
