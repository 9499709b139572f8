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
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "riskbias/biaser.hpp"
#include "riskbias/cvae.hpp"

namespace riskbias {

/// Differentiable J(g(z, x)) - target for a single conditioning row; z is 1 x L.
inline Var degenerate_residual(Tape& t, const CvaeModel& m, const Conditioning& c, Var z,
                               double target, const TtcParams& p) {
  Var y = decode(t, m, t.constant(c.past), z, false);
  return ad::add_scalar(t, ad::ttc_cost(t, y, c.robot, c.dt, p), -target);
}

/// J(g(z, x)) and its gradient in z.
struct LatentCost {
  double cost = 0.0;
  std::vector<double> grad;
};

inline LatentCost latent_cost(const CvaeModel& m, const Conditioning& c,
                              std::span<const double> z, const TtcParams& p) {
  Tape t;
  Var zv = t.leaf(Tensor::row(z));
  Var j = degenerate_residual(t, m, c, zv, 0.0, p);
  t.backward(j);
  const Tensor g = t.grad(zv);
  return {t.value(j)(0, 0), std::vector<double>(g.data().begin(), g.data().end())};
}

inline double latent_cost_value(const CvaeModel& m, const Conditioning& c,
                                std::span<const double> z, const TtcParams& p) {
  const Tensor y = decode(m, c.past, Tensor::row(z));
  return trajectory_ttc_cost(y.data(), c.robot.data(), c.dt, p);
}

struct DegenerateSearchOptions {
  int grid_starts = 4;       // per dimension, spanning mu +- 2 std
  double probe_extent = 3.0;  // probe grid half width in prior std units
  int probe_resolution = 33;
  int max_iterations = 100;
  int bisection_steps = 200;
};

/// A latent point whose decoded forecast has (nearly) the requested cost,
/// i.e. the support of a Dirac bias meeting the risk constraint exactly.
struct DegenerateBias {
  std::vector<double> z;
  double cost = 0.0;
  double residual = 0.0;
  std::string method;  // "start", "newton" or "bisection"
};

namespace detail {

inline std::vector<std::vector<double>> latent_grid_points(const DiagonalGaussian& prior,
                                                           double extent, int n) {
  const std::size_t l = prior.dim();
  const auto sd = prior.stddev();
  std::vector<std::vector<double>> pts;
  std::vector<int> idx(l, 0);
  while (true) {
    std::vector<double> z(l);
    for (std::size_t j = 0; j < l; ++j) {
      const double u = n == 1 ? 0.0 : -1.0 + 2.0 * idx[j] / (n - 1);
      z[j] = prior.mu(0, j) + extent * sd[j] * u;
    }
    pts.push_back(std::move(z));
    std::size_t d = 0;
    while (d < l && ++idx[d] == n) idx[d++] = 0;
    if (d == l) break;
  }
  return pts;
}

}  // namespace detail

/// Searches for z* with |J(g(z*, x)) - target| < tol. Starts from the prior
/// mean and a grid of starts, taking Newton steps on the scalar residual; if
/// none converges, bisects along a segment between probe points that bracket
/// the target. Throws SearchFailure when the probe grid does not bracket it.
inline DegenerateBias find_degenerate_bias(const CvaeModel& m, const Conditioning& c,
                                           double target, double tol, const TtcParams& p = {},
                                           const DegenerateSearchOptions& opt = {}) {
  if (c.past.rows() != 1) throw UsageError("find_degenerate_bias: expects a single scene");
  if (!(tol > 0.0)) throw UsageError("find_degenerate_bias: tolerance must be positive");
  const DiagonalGaussian prior = encode_prior(m, c.past);
  const std::size_t l = prior.dim();

  const auto probes = detail::latent_grid_points(prior, opt.probe_extent, opt.probe_resolution);
  std::vector<double> probe_cost(probes.size());
  for (std::size_t i = 0; i < probes.size(); ++i)
    probe_cost[i] = latent_cost_value(m, c, probes[i], p);
  const auto [lo_it, hi_it] = std::minmax_element(probe_cost.begin(), probe_cost.end());
  if (target < *lo_it || target > *hi_it)
    throw SearchFailure("find_degenerate_bias: target " + std::to_string(target) +
                            " is outside the probed cost range [" + std::to_string(*lo_it) + ", " +
                            std::to_string(*hi_it) + "]",
                        std::min(std::abs(target - *lo_it), std::abs(target - *hi_it)));

  DegenerateBias best;
  best.residual = std::numeric_limits<double>::infinity();
  auto consider = [&](const std::vector<double>& z, double cost, const char* method) {
    const double r = std::abs(cost - target);
    if (r < best.residual) best = {z, cost, r, method};
    return r < tol;
  };

  std::vector<std::vector<double>> starts{std::vector<double>(prior.mu.data().begin(),
                                                              prior.mu.data().end())};
  for (auto& s : detail::latent_grid_points(prior, 2.0, opt.grid_starts)) starts.push_back(s);

  for (std::size_t si = 0; si < starts.size(); ++si) {
    std::vector<double> z = starts[si];
    LatentCost lc = latent_cost(m, c, z, p);
    if (consider(z, lc.cost, si == 0 ? "start" : "newton")) return best;
    for (int it = 0; it < opt.max_iterations; ++it) {
      const double r = lc.cost - target;
      double gg = 0.0;
      for (double g : lc.grad) gg += g * g;
      if (!(gg > 1e-300)) break;
      double step = 1.0;
      bool improved = false;
      for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
        std::vector<double> zn(l);
        for (std::size_t j = 0; j < l; ++j) zn[j] = z[j] - step * r * lc.grad[j] / gg;
        const double cn = latent_cost_value(m, c, zn, p);
        if (std::abs(cn - target) < std::abs(r)) {
          z = std::move(zn);
          improved = true;
          break;
        }
      }
      if (!improved) break;
      lc = latent_cost(m, c, z, p);
      if (consider(z, lc.cost, "newton")) return best;
    }
  }

  // Bracketing fallback: a sub-target and a super-target probe, closest pair.
  std::optional<std::size_t> below, above;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probes.size(); ++i) {
    if (probe_cost[i] > target) continue;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      if (probe_cost[k] < target) continue;
      double d2 = 0.0;
      for (std::size_t j = 0; j < l; ++j) d2 += (probes[i][j] - probes[k][j]) * (probes[i][j] - probes[k][j]);
      if (d2 < best_gap) {
        best_gap = d2;
        below = i;
        above = k;
      }
    }
  }
  if (below && above) {
    std::vector<double> a = probes[*below], b = probes[*above];
    for (int it = 0; it < opt.bisection_steps; ++it) {
      std::vector<double> mid(l);
      for (std::size_t j = 0; j < l; ++j) mid[j] = 0.5 * (a[j] + b[j]);
      const double cm = latent_cost_value(m, c, mid, p);
      if (consider(mid, cm, "bisection")) return best;
      (cm < target ? a : b) = std::move(mid);
    }
  }
  throw SearchFailure("find_degenerate_bias: no start reached tolerance " + std::to_string(tol),
                      best.residual);
}

using VectorMap = std::function<std::vector<double>(std::span<const double>)>;

struct JacobianDet {
  double value = 0.0;        // |det J|
  double condition = 0.0;    // 2-norm condition number of J
  bool ill_conditioned = false;
  std::string warning;
};

/// |det| of the central-difference Jacobian of a square map at z.
inline JacobianDet jacobian_det(const VectorMap& fn, std::span<const double> z,
                                double fd_step = 1e-5) {
  if (z.empty()) throw UsageError("jacobian_det: empty input");
  if (!(fd_step > 0.0)) throw UsageError("jacobian_det: step must be positive");
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd jac(n, n);
  std::vector<double> zp(z.begin(), z.end());
  for (Eigen::Index j = 0; j < n; ++j) {
    const double orig = zp[j];
    zp[j] = orig + fd_step;
    const auto fp = fn(zp);
    zp[j] = orig - fd_step;
    const auto fm = fn(zp);
    zp[j] = orig;
    if (fp.size() != z.size() || fm.size() != z.size())
      throw UsageError("jacobian_det: map must be square (output dim " +
                       std::to_string(fp.size()) + ", input dim " + std::to_string(z.size()) + ")");
    for (Eigen::Index i = 0; i < n; ++i) jac(i, j) = (fp[i] - fm[i]) / (2.0 * fd_step);
  }
  JacobianDet out;
  if (!jac.allFinite()) {
    out.value = std::numeric_limits<double>::quiet_NaN();
    out.ill_conditioned = true;
    out.warning = "non-finite jacobian";
    return out;
  }
  out.value = std::abs(jac.fullPivLu().determinant());
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const auto& s = svd.singularValues();
  out.condition = s(n - 1) > 0.0 ? s(0) / s(n - 1) : std::numeric_limits<double>::infinity();
  if (out.condition > 1e8) {
    out.ill_conditioned = true;
    out.warning = "jacobian is singular or ill-conditioned (cond " +
                  std::to_string(out.condition) + ")";
  }
  return out;
}

struct LatentGridSpec {
  double z1_min = -3.0, z1_max = 3.0;
  double z2_min = -3.0, z2_max = 3.0;
  int resolution = 64;  // cells per axis
};

struct Ellipse {
  double sigma = 0.0;
  std::vector<double> mu;
  std::vector<double> std;
};

struct LatentCostMap {
  std::vector<double> z1, z2;
  std::vector<double> values;  // row-major, z2 outer
  std::vector<Ellipse> ellipses;

  double at(std::size_t i2, std::size_t i1) const { return values[i2 * z1.size() + i1]; }
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return v;
}

/// Cost of the decoded forecast over a 2-D latent grid, plus the biased
/// latent Gaussian for each requested risk level (ordered by sigma).
inline LatentCostMap latent_cost_map(const CvaeModel& m, const Conditioning& c,
                                     const LatentGridSpec& grid, const BiaserModel* biaser,
                                     std::vector<double> sigmas, const TtcParams& p = {}) {
  if (m.latent() != 2) throw UsageError("latent_cost_map: latent dimension must be 2");
  if (grid.resolution < 1) throw UsageError("latent_cost_map: resolution must be positive");
  LatentCostMap out;
  out.z1 = linspace(grid.z1_min, grid.z1_max, grid.resolution);
  out.z2 = linspace(grid.z2_min, grid.z2_max, grid.resolution);
  const std::size_t n = out.z1.size();
  Tensor z(n * n, 2);
  for (std::size_t i2 = 0; i2 < n; ++i2)
    for (std::size_t i1 = 0; i1 < n; ++i1) {
      z(i2 * n + i1, 0) = out.z1[i1];
      z(i2 * n + i1, 1) = out.z2[i2];
    }
  const Tensor y = decode(m, detail::repeat_rows(c.past, n * n), z);
  out.values = forecast_costs(y, c.robot, c.dt, p);
  std::sort(sigmas.begin(), sigmas.end());
  if (biaser) {
    for (double s : sigmas) {
      const DiagonalGaussian g = encode_biased(*biaser, c, s);
      out.ellipses.push_back({s, {g.mu(0, 0), g.mu(0, 1)}, g.stddev()});
    }
  }
  return out;
}

inline void write_latent_map(const LatentCostMap& map, const std::filesystem::path& csv,
                             const std::filesystem::path& json) {
  {
    std::ofstream os(csv);
    if (!os) throw IoError("cannot write " + csv.string());
    os.precision(17);
    os << "z1,z2,cost\n";
    for (std::size_t i2 = 0; i2 < map.z2.size(); ++i2)
      for (std::size_t i1 = 0; i1 < map.z1.size(); ++i1)
        os << map.z1[i1] << ',' << map.z2[i2] << ',' << map.at(i2, i1) << '\n';
  }
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : map.ellipses) list.push_back({{"sigma", e.sigma}, {"mu", e.mu}, {"std", e.std}});
  std::ofstream os(json);
  if (!os) throw IoError("cannot write " + json.string());
  os << list.dump(2) << '\n';
}

}  // namespace riskbias
