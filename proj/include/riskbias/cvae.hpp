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
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "riskbias/autodiff.hpp"
#include "riskbias/checkpoint.hpp"
#include "riskbias/features.hpp"
#include "riskbias/mlp.hpp"
#include "riskbias/optim.hpp"
#include "riskbias/rng.hpp"
#include "riskbias/sim.hpp"

namespace riskbias {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Diagonal Gaussians, one per row: mu and log_var are B x L.
struct DiagonalGaussian {
  Tensor mu;
  Tensor log_var;

  std::size_t dim() const { return mu.cols(); }
  std::vector<double> stddev(std::size_t row = 0) const {
    std::vector<double> s(dim());
    for (std::size_t j = 0; j < dim(); ++j) s[j] = std::exp(0.5 * log_var(row, j));
    return s;
  }
};

/// Tape handles for a batch of Gaussians.
struct GaussianVars {
  Var mu;
  Var log_var;
};

/// z = mu + exp(log_var / 2) * noise, row-wise.
inline Tensor reparameterize(const DiagonalGaussian& g, const Tensor& noise) {
  if (!noise.same_shape(g.mu))
    throw DimensionError("reparameterize: noise " + shape_string(noise) + " vs mean " +
                         shape_string(g.mu));
  Matrix z = g.mu.matrix().array() +
             (0.5 * g.log_var.matrix().array()).exp() * noise.matrix().array();
  return Tensor(std::move(z));
}

inline Var reparameterize(Tape& t, const GaussianVars& g, Var noise) {
  Var sd = ad::exp(t, ad::scale(t, g.log_var, 0.5));
  return ad::add(t, g.mu, ad::mul(t, sd, noise));
}

/// Closed-form KL(q || p) summed over dimensions, one value per row.
inline std::vector<double> kl_diag_gaussians(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (!q.mu.same_shape(p.mu) || !q.log_var.same_shape(p.log_var) || !q.mu.same_shape(q.log_var))
    throw DimensionError("kl_diag_gaussians: dimension mismatch");
  std::vector<double> out(q.mu.rows());
  for (std::size_t r = 0; r < q.mu.rows(); ++r) {
    double kl = 0.0;
    for (std::size_t j = 0; j < q.dim(); ++j) {
      const double lq = q.log_var(r, j);
      const double lp = p.log_var(r, j);
      const double d = q.mu(r, j) - p.mu(r, j);
      kl += 0.5 * (lp - lq + (std::exp(lq) + d * d) / std::exp(lp) - 1.0);
    }
    out[r] = kl;
  }
  return out;
}

/// Differentiable row-wise KL, B x 1.
inline Var kl_diag_gaussians(Tape& t, const GaussianVars& q, const GaussianVars& p) {
  Var d = ad::sub(t, q.mu, p.mu);
  Var num = ad::add(t, ad::exp(t, q.log_var), ad::square(t, d));
  Var ratio = ad::mul(t, num, ad::exp(t, ad::scale(t, p.log_var, -1.0)));
  Var terms = ad::add_scalar(t, ad::add(t, ad::sub(t, p.log_var, q.log_var), ratio), -1.0);
  return ad::scale(t, ad::row_sum(t, terms), 0.5);
}

struct CvaeDims {
  int past_steps = 10;
  int future_steps = 50;
  int latent_dim = 2;
  int hidden = 64;

  friend bool operator==(const CvaeDims&, const CvaeDims&) = default;
};

/// Inference encoder (prior), posterior encoder and decoder of the
/// trajectory CVAE. Trajectories are flattened xy sequences relative to the
/// last observed position.
struct CvaeModel {
  CvaeDims dims;
  MlpParams prior;      // x -> (mu, log_var)
  MlpParams posterior;  // (x, y) -> (mu, log_var)
  MlpParams decoder;    // (x, z) -> y

  std::size_t past_width() const { return 2 * static_cast<std::size_t>(dims.past_steps); }
  std::size_t future_width() const { return 2 * static_cast<std::size_t>(dims.future_steps); }
  std::size_t latent() const { return static_cast<std::size_t>(dims.latent_dim); }

  static std::vector<std::vector<std::size_t>> layer_dims(const CvaeDims& d) {
    const std::size_t h = static_cast<std::size_t>(d.hidden);
    const std::size_t p = 2 * static_cast<std::size_t>(d.past_steps);
    const std::size_t f = 2 * static_cast<std::size_t>(d.future_steps);
    const std::size_t l = static_cast<std::size_t>(d.latent_dim);
    return {{p, h, h, 2 * l}, {p + f, h, h, 2 * l}, {p + l, h, h, f}};
  }

  static CvaeModel create(const CvaeDims& d, Rng& rng) {
    const auto ld = layer_dims(d);
    return {d, MlpParams::glorot(ld[0], rng), MlpParams::glorot(ld[1], rng),
            MlpParams::glorot(ld[2], rng)};
  }

  static CvaeModel zeros(const CvaeDims& d) {
    const auto ld = layer_dims(d);
    return {d, MlpParams::zeros(ld[0]), MlpParams::zeros(ld[1]), MlpParams::zeros(ld[2])};
  }

  std::vector<ParamRef> parameters() {
    auto refs = prior.parameters("prior");
    for (auto& r : posterior.parameters("posterior")) refs.push_back(r);
    for (auto& r : decoder.parameters("decoder")) refs.push_back(r);
    return refs;
  }

  std::size_t parameter_count() const {
    return prior.parameter_count() + posterior.parameter_count() + decoder.parameter_count();
  }

  Checkpoint to_checkpoint() const {
    Checkpoint c;
    c.kind = "cvae";
    c.meta = {{"past_steps", dims.past_steps},
              {"future_steps", dims.future_steps},
              {"latent_dim", dims.latent_dim},
              {"hidden", dims.hidden}};
    c.nets = {{"prior", prior}, {"posterior", posterior}, {"decoder", decoder}};
    return c;
  }

  static nlohmann::json descriptor(const CvaeDims& d) {
    Checkpoint c = zeros(d).to_checkpoint();
    return c.descriptor();
  }

  static CvaeModel from_checkpoint(const Checkpoint& c) {
    if (c.kind != "cvae") throw MismatchError("checkpoint kind '" + c.kind + "' is not cvae");
    CvaeDims d;
    try {
      d.past_steps = c.meta.at("past_steps").get<int>();
      d.future_steps = c.meta.at("future_steps").get<int>();
      d.latent_dim = c.meta.at("latent_dim").get<int>();
      d.hidden = c.meta.at("hidden").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("cvae checkpoint meta: ") + e.what());
    }
    if (c.descriptor() != descriptor(d))
      throw MismatchError("cvae checkpoint layers do not match its metadata");
    return {d, c.net("prior"), c.net("posterior"), c.net("decoder")};
  }

  void save(const std::filesystem::path& path) const { save_checkpoint(to_checkpoint(), path); }

  static CvaeModel load(const std::filesystem::path& path) {
    return from_checkpoint(load_checkpoint(path));
  }

  /// Loads and checks the architecture against `expected`.
  static CvaeModel load(const std::filesystem::path& path, const CvaeDims& expected) {
    return from_checkpoint(load_checkpoint(path, descriptor(expected)));
  }

  friend bool operator==(const CvaeModel& a, const CvaeModel& b) {
    return a.dims == b.dims && a.prior == b.prior && a.posterior == b.posterior &&
           a.decoder == b.decoder;
  }
};

/// FNV-1a over every parameter's bit pattern; used to prove a model was
/// left untouched.
inline std::uint64_t parameter_hash(const std::vector<const MlpParams*>& nets) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const MlpParams* n : nets) {
    for (const auto& l : n->layers) {
      for (const Tensor* t : {&l.weight, &l.bias}) {
        for (double v : t->data()) {
          const auto bits = std::bit_cast<std::uint64_t>(v);
          for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
          }
        }
      }
    }
  }
  return h;
}

inline std::uint64_t parameter_hash(const CvaeModel& m) {
  return parameter_hash({&m.prior, &m.posterior, &m.decoder});
}

namespace detail {

inline DiagonalGaussian split_gaussian(const Tensor& out, std::size_t latent) {
  DiagonalGaussian g;
  g.mu = Tensor(out.matrix().leftCols(static_cast<Eigen::Index>(latent)));
  g.log_var = Tensor(Matrix(out.matrix()
                                .middleCols(static_cast<Eigen::Index>(latent),
                                            static_cast<Eigen::Index>(latent))
                                .cwiseMax(kLogVarMin)
                                .cwiseMin(kLogVarMax)));
  return g;
}

inline GaussianVars split_gaussian(Tape& t, Var out, std::size_t latent) {
  return {ad::slice_cols(t, out, 0, latent),
          ad::clamp(t, ad::slice_cols(t, out, latent, latent), kLogVarMin, kLogVarMax)};
}

inline Tensor hconcat(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw DimensionError("hconcat: row mismatch");
  Matrix m(a.matrix().rows(), a.matrix().cols() + b.matrix().cols());
  m << a.matrix(), b.matrix();
  return Tensor(std::move(m));
}

inline Tensor repeat_rows(const Tensor& a, std::size_t k) {
  const auto kk = static_cast<Eigen::Index>(k);
  Matrix out(a.matrix().rows() * kk, a.matrix().cols());
  for (Eigen::Index r = 0; r < a.matrix().rows(); ++r)
    out.middleRows(r * kk, kk) = a.matrix().row(r).replicate(kk, 1);
  return Tensor(std::move(out));
}

inline Tensor normal_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.normal();
  return t;
}

}  // namespace detail

/// Inferred prior q(z | x) for each row of `past` (B x 2P).
inline DiagonalGaussian encode_prior(const CvaeModel& m, const Tensor& past) {
  if (past.cols() != m.past_width())
    throw UsageError("encode_prior: past width " + std::to_string(past.cols()) +
                     ", model expects " + std::to_string(m.past_width()));
  return detail::split_gaussian(mlp_eval(m.prior, past), m.latent());
}

inline DiagonalGaussian encode_prior(const CvaeModel& m, const Trajectory& x) {
  return encode_prior(m, past_row(x));
}

inline DiagonalGaussian encode_posterior(const CvaeModel& m, const Tensor& past,
                                         const Tensor& future) {
  if (past.cols() != m.past_width() || future.cols() != m.future_width() ||
      past.rows() != future.rows())
    throw UsageError("encode_posterior: input shapes " + shape_string(past) + " and " +
                     shape_string(future) + " do not match the model");
  return detail::split_gaussian(mlp_eval(m.posterior, detail::hconcat(past, future)),
                                m.latent());
}

inline DiagonalGaussian encode_posterior(const CvaeModel& m, const Trajectory& x,
                                         const Trajectory& y) {
  return encode_posterior(m, past_row(x), relative_row(y, x.back()));
}

/// Decoded futures (B x 2F, relative to the last observed position).
inline Tensor decode(const CvaeModel& m, const Tensor& past, const Tensor& z) {
  if (past.rows() != z.rows() || z.cols() != m.latent() || past.cols() != m.past_width())
    throw UsageError("decode: input shapes " + shape_string(past) + " and " +
                     shape_string(z) + " do not match the model");
  return mlp_eval(m.decoder, detail::hconcat(past, z));
}

inline GaussianVars encode_prior(Tape& t, const CvaeModel& m, Var past, bool trainable) {
  return detail::split_gaussian(t, mlp_forward(t, m.prior, past, trainable), m.latent());
}

inline GaussianVars encode_posterior(Tape& t, const CvaeModel& m, Var past, Var future,
                                     bool trainable) {
  Var in = ad::concat_cols(t, {past, future});
  return detail::split_gaussian(t, mlp_forward(t, m.posterior, in, trainable), m.latent());
}

inline Var decode(Tape& t, const CvaeModel& m, Var past, Var z, bool trainable) {
  return mlp_forward(t, m.decoder, ad::concat_cols(t, {past, z}), trainable);
}

struct ElboTerms {
  Var loss;   // scalar
  Var recon;  // scalar, batch mean of 0.5 * ||y - y_hat||^2
  Var kl;     // scalar, batch mean of KL(posterior || prior)
};

/// Negative single-sample ELBO averaged over the batch:
///   0.5 ||y - g(x, z)||^2 + beta * KL(q(z | x, y) || q(z | x)),
/// z = mu_post + sd_post * noise. The decoder likelihood is a unit-variance
/// Gaussian whose normalizing constant is dropped.
inline ElboTerms elbo_loss(Tape& t, const CvaeModel& m, const Tensor& past,
                           const Tensor& future, const Tensor& noise, double beta) {
  if (noise.rows() != past.rows() || noise.cols() != m.latent())
    throw DimensionError("elbo_loss: noise must be B x latent_dim");
  Var x = t.constant(past);
  Var y = t.constant(future);
  GaussianVars prior = encode_prior(t, m, x, true);
  GaussianVars post = encode_posterior(t, m, x, y, true);
  Var z = reparameterize(t, post, t.constant(noise));
  Var y_hat = decode(t, m, x, z, true);
  Var sq = ad::row_sum(t, ad::square(t, ad::sub(t, y_hat, y)));
  Var recon = ad::scale(t, ad::mean(t, sq), 0.5);
  Var kl = ad::mean(t, kl_diag_gaussians(t, post, prior));
  Var loss = ad::add(t, recon, ad::scale(t, kl, beta));
  return {loss, recon, kl};
}

struct CvaeTrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta = 1.0;
  double warmup_fraction = 0.1;
  CvaeDims dims;
};

struct TrainCurveRow {
  int epoch = 0;
  double loss = 0.0;
  double kl = 0.0;
  double recon = 0.0;
};

inline void write_cvae_curve_csv(const std::vector<TrainCurveRow>& rows,
                                 const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(10);
  os << "epoch,loss,kl,recon\n";
  for (const auto& r : rows) os << r.epoch << ',' << r.loss << ',' << r.kl << ',' << r.recon << '\n';
}

/// Fisher-Yates permutation driven by `rng`.
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

using ProgressFn = std::function<void(const TrainCurveRow&)>;

/// Minibatch Adam on the negative ELBO with linear KL warm-up.
inline CvaeModel train_cvae(const Dataset& data, const CvaeTrainConfig& cfg, Rng& rng,
                            std::vector<TrainCurveRow>* curve = nullptr,
                            const ProgressFn& progress = nullptr) {
  if (data.scenes.empty()) throw UsageError("train_cvae: empty dataset");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw UsageError("train_cvae: bad epochs/batch size");
  Rng init_rng = rng.split(0);
  CvaeModel model = CvaeModel::create(cfg.dims, init_rng);
  std::vector<ParamRef> params = model.parameters();
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  OptimState state = OptimState::for_params(params, adam);

  const SceneBatch all = make_batch(std::span<const Scene>(data.scenes), cfg.dims.past_steps,
                                    cfg.dims.future_steps);
  const std::size_t n = data.scenes.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const std::size_t batches = (n + bs - 1) / bs;
  const double total_steps = static_cast<double>(batches) * cfg.epochs;
  const double warmup = std::max(1.0, cfg.warmup_fraction * total_steps);
  std::uint64_t step = 0;
  std::vector<Tensor> grads(params.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng epoch_rng = rng.split(1 + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(n, epoch_rng);
    double sum_loss = 0.0, sum_kl = 0.0, sum_recon = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(n, lo + bs);
      const auto rows = static_cast<Eigen::Index>(hi - lo);
      Tensor past(hi - lo, all.past.cols()), future(hi - lo, all.future.cols());
      for (Eigen::Index r = 0; r < rows; ++r) {
        past.matrix().row(r) = all.past.matrix().row(static_cast<Eigen::Index>(order[lo + r]));
        future.matrix().row(r) = all.future.matrix().row(static_cast<Eigen::Index>(order[lo + r]));
      }
      Tensor noise = detail::normal_tensor(hi - lo, model.latent(), epoch_rng);
      const double beta = cfg.beta * std::min(1.0, static_cast<double>(step + 1) / warmup);
      Tape tape;
      ElboTerms terms = elbo_loss(tape, model, past, future, noise, beta);
      const double loss = tape.value(terms.loss)(0, 0);
      if (!std::isfinite(loss))
        throw TrainingError("train_cvae: loss diverged at epoch " + std::to_string(epoch));
      tape.backward(terms.loss);
      for (std::size_t i = 0; i < params.size(); ++i) grads[i] = tape.param_grad(*params[i].value);
      adam_step(params, grads, state);
      ++step;
      const double w = static_cast<double>(hi - lo);
      sum_loss += loss * w;
      sum_kl += tape.value(terms.kl)(0, 0) * w;
      sum_recon += tape.value(terms.recon)(0, 0) * w;
    }
    TrainCurveRow row{epoch, sum_loss / n, sum_kl / n, sum_recon / n};
    if (curve) curve->push_back(row);
    if (progress) progress(row);
  }
  return model;
}

/// K futures sampled from the inferred prior, in world coordinates. With
/// `noise` supplied (K x L) it is used instead of fresh draws.
inline std::vector<Trajectory> sample_forecasts(const CvaeModel& m, const Trajectory& x,
                                                std::size_t k, Rng& rng,
                                                const Tensor* noise = nullptr) {
  if (k == 0) throw UsageError("sample_forecasts: K must be at least 1");
  const Tensor past = past_row(x);
  const DiagonalGaussian prior = encode_prior(m, past);
  DiagonalGaussian rep{detail::repeat_rows(prior.mu, k), detail::repeat_rows(prior.log_var, k)};
  const Tensor eps = noise ? *noise : detail::normal_tensor(k, m.latent(), rng);
  const Tensor y = decode(m, detail::repeat_rows(past, k), reparameterize(rep, eps));
  std::vector<Trajectory> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::span<const double> row(y.matrix().data() + i * y.cols(), y.cols());
    out.push_back(Trajectory::from_flat(row, x.dt, x.back()));
  }
  return out;
}

}  // namespace riskbias
