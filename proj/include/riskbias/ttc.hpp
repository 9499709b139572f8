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

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "riskbias/autodiff.hpp"
#include "riskbias/errors.hpp"
#include "riskbias/trajectory.hpp"

namespace riskbias {

/// State of agent i relative to agent j: (dx, dy) = p_i - p_j in meters,
/// (dvx, dvy) = v_i - v_j in m/s.
struct RelativeState {
  double dx = 0.0;
  double dy = 0.0;
  double dvx = 0.0;
  double dvy = 0.0;
};

struct TtcParams {
  double lambda_t = 0.2;   // s^2
  double lambda_d = 2.0;   // m^2
  double epsilon = 0.01;   // m/s, floor on relative speed

  void validate() const {
    if (!(lambda_t > 0.0) || !(lambda_d > 0.0) || !(epsilon > 0.0))
      throw DomainError("TTC bandwidths and speed floor must be strictly positive");
  }
};

/// Clamped time of closest approach and squared miss distance.
struct ClosestApproach {
  double time = 0.0;
  double dist_sq = 0.0;
  bool approaching = false;  // false: receding fallback to current distance
};

inline ClosestApproach closest_approach(const RelativeState& r, const TtcParams& p) {
  const double dv2 = r.dvx * r.dvx + r.dvy * r.dvy;
  const double dot = r.dvx * r.dx + r.dvy * r.dy;
  // dv == 0 leaves the unclamped time undefined; treat like receding.
  if (dv2 > 0.0 && dot <= 0.0) {
    const double s2 = std::max(dv2, p.epsilon * p.epsilon);
    const double cross = r.dvx * r.dy - r.dvy * r.dx;
    return {-dot / s2, cross * cross / s2, true};
  }
  return {0.0, r.dx * r.dx + r.dy * r.dy, false};
}

/// Cost and its partial derivatives with respect to (dx, dy, dvx, dvy).
struct TtcPartials {
  double cost = 0.0;
  double d_dx = 0.0;
  double d_dy = 0.0;
  double d_dvx = 0.0;
  double d_dvy = 0.0;
};

inline TtcPartials ttc_cost_partials(const RelativeState& r, const TtcParams& p) {
  TtcPartials out;
  const double dv2 = r.dvx * r.dvx + r.dvy * r.dvy;
  const double dot = r.dvx * r.dx + r.dvy * r.dy;
  if (dv2 > 0.0 && dot <= 0.0) {
    const double eps2 = p.epsilon * p.epsilon;
    const bool floored = dv2 < eps2;
    const double s2 = floored ? eps2 : dv2;
    const double cross = r.dvx * r.dy - r.dvy * r.dx;
    const double t = -dot / s2;
    const double d2 = cross * cross / s2;
    out.cost = std::exp(-t * t / (2.0 * p.lambda_t) - d2 / (2.0 * p.lambda_d));
    const double dE_dt = -t / p.lambda_t;
    const double dE_dd2 = -1.0 / (2.0 * p.lambda_d);
    // d(s2)/d(dv) is zero on the floor.
    const double ds2_dvx = floored ? 0.0 : 2.0 * r.dvx;
    const double ds2_dvy = floored ? 0.0 : 2.0 * r.dvy;
    const double dt_dx = -r.dvx / s2;
    const double dt_dy = -r.dvy / s2;
    const double dt_dvx = -r.dx / s2 + dot / (s2 * s2) * ds2_dvx;
    const double dt_dvy = -r.dy / s2 + dot / (s2 * s2) * ds2_dvy;
    const double dd_dx = -2.0 * cross * r.dvy / s2;
    const double dd_dy = 2.0 * cross * r.dvx / s2;
    const double dd_dvx = 2.0 * cross * r.dy / s2 - d2 / s2 * ds2_dvx;
    const double dd_dvy = -2.0 * cross * r.dx / s2 - d2 / s2 * ds2_dvy;
    out.d_dx = out.cost * (dE_dt * dt_dx + dE_dd2 * dd_dx);
    out.d_dy = out.cost * (dE_dt * dt_dy + dE_dd2 * dd_dy);
    out.d_dvx = out.cost * (dE_dt * dt_dvx + dE_dd2 * dd_dvx);
    out.d_dvy = out.cost * (dE_dt * dt_dvy + dE_dd2 * dd_dvy);
    return out;
  }
  const double d2 = r.dx * r.dx + r.dy * r.dy;
  out.cost = std::exp(-d2 / (2.0 * p.lambda_d));
  out.d_dx = -out.cost * r.dx / p.lambda_d;
  out.d_dy = -out.cost * r.dy / p.lambda_d;
  return out;
}

inline double instantaneous_ttc_cost(const RelativeState& r, const TtcParams& p) {
  if (!std::isfinite(r.dx) || !std::isfinite(r.dy) || !std::isfinite(r.dvx) ||
      !std::isfinite(r.dvy))
    throw DomainError("instantaneous_ttc_cost: non-finite relative state");
  const ClosestApproach ca = closest_approach(r, p);
  return std::exp(-ca.time * ca.time / (2.0 * p.lambda_t) - ca.dist_sq / (2.0 * p.lambda_d));
}

/// Mean instantaneous cost between an agent and the robot over aligned steps.
/// Both trajectories are interleaved xy arrays of equal length; velocities are
/// forward differences with the last step repeated. When `grad_agent` is
/// non-empty it receives dJ/d(agent positions).
inline double trajectory_ttc_cost(std::span<const double> agent, std::span<const double> robot,
                                  double dt, const TtcParams& p,
                                  std::span<double> grad_agent = {}) {
  if (agent.size() != robot.size())
    throw UsageError("trajectory_ttc_cost: agent and robot lengths differ");
  if (agent.size() < 4 || agent.size() % 2 != 0)
    throw UsageError("trajectory_ttc_cost: need at least two xy steps");
  const std::size_t steps = agent.size() / 2;
  const bool want_grad = !grad_agent.empty();
  if (want_grad) {
    if (grad_agent.size() != agent.size())
      throw DimensionError("trajectory_ttc_cost: gradient buffer size mismatch");
    std::fill(grad_agent.begin(), grad_agent.end(), 0.0);
  }
  const double inv_dt = 1.0 / dt;
  const double inv_steps = 1.0 / static_cast<double>(steps);
  double total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    // Velocity index: forward difference from k to k+1.
    const std::size_t k = (t + 1 < steps) ? t : steps - 2;
    RelativeState r;
    r.dx = agent[2 * t] - robot[2 * t];
    r.dy = agent[2 * t + 1] - robot[2 * t + 1];
    const double avx = (agent[2 * k + 2] - agent[2 * k]) * inv_dt;
    const double avy = (agent[2 * k + 3] - agent[2 * k + 1]) * inv_dt;
    const double rvx = (robot[2 * k + 2] - robot[2 * k]) * inv_dt;
    const double rvy = (robot[2 * k + 3] - robot[2 * k + 1]) * inv_dt;
    r.dvx = avx - rvx;
    r.dvy = avy - rvy;
    if (!want_grad) {
      total += instantaneous_ttc_cost(r, p);
      continue;
    }
    const TtcPartials d = ttc_cost_partials(r, p);
    total += d.cost;
    grad_agent[2 * t] += d.d_dx * inv_steps;
    grad_agent[2 * t + 1] += d.d_dy * inv_steps;
    grad_agent[2 * k + 2] += d.d_dvx * inv_dt * inv_steps;
    grad_agent[2 * k] -= d.d_dvx * inv_dt * inv_steps;
    grad_agent[2 * k + 3] += d.d_dvy * inv_dt * inv_steps;
    grad_agent[2 * k + 1] -= d.d_dvy * inv_dt * inv_steps;
  }
  return total * inv_steps;
}

inline double trajectory_ttc_cost(const Trajectory& agent, const Trajectory& robot,
                                  const TtcParams& p) {
  if (agent.size() != robot.size())
    throw UsageError("trajectory_ttc_cost: agent has " + std::to_string(agent.size()) +
                     " steps, robot has " + std::to_string(robot.size()));
  if (agent.dt != robot.dt) throw UsageError("trajectory_ttc_cost: time steps differ");
  const auto a = agent.flat();
  const auto r = robot.flat();
  return trajectory_ttc_cost(a, r, agent.dt, p);
}

namespace ad {

/// Row-wise trajectory TTC cost: agent [B x 2T] (differentiable) against a
/// constant robot [B x 2T] or [1 x 2T]; returns [B x 1].
inline Var ttc_cost(Tape& t, Var agent, const Tensor& robot, double dt, const TtcParams& p) {
  const Matrix& A = t.value(agent).matrix();
  const Matrix& R = robot.matrix();
  if (R.cols() != A.cols() || (R.rows() != A.rows() && R.rows() != 1))
    throw DimensionError("ttc_cost: robot " + shape_string(robot) + " vs agent " +
                         shape_string(t.value(agent)));
  const bool track = t.requires_grad(agent);
  Matrix out(A.rows(), 1);
  Matrix jac = track ? Matrix(A.rows(), A.cols()) : Matrix();
  const auto cols = static_cast<std::size_t>(A.cols());
  for (Eigen::Index b = 0; b < A.rows(); ++b) {
    const Eigen::Index rb = R.rows() == 1 ? 0 : b;
    std::span<const double> a(A.data() + b * A.cols(), cols);
    std::span<const double> r(R.data() + rb * R.cols(), cols);
    std::span<double> g;
    if (track) g = std::span<double>(jac.data() + b * jac.cols(), cols);
    out(b, 0) = trajectory_ttc_cost(a, r, dt, p, g);
  }
  return t.op(Tensor(std::move(out)), {agent.id},
              [jac = std::move(jac)](Tape& tp, int self) {
                const Matrix& g = tp.grad_matrix(self);
                tp.accumulate(tp.inputs(self)[0], jac.array().colwise() * g.col(0).array());
              });
}

}  // namespace ad

struct GridSpec {
  double x_min = -20.0;
  double x_max = 20.0;
  double y_min = -10.0;
  double y_max = 10.0;
  double resolution = 0.5;
};

/// Row-major grid (rows along y, columns along x) of cell costs.
struct CostGrid {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;

  double at(std::size_t iy, std::size_t ix) const { return values[iy * xs.size() + ix]; }
};

inline std::vector<double> grid_axis(double lo, double hi, double step) {
  std::vector<double> axis;
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) axis.push_back(lo + step * static_cast<double>(i));
  return axis;
}

/// Instantaneous cost of a probe agent placed at every grid cell with the
/// given speed and heading, against a robot at `robot_pos` moving at
/// `robot_vel`.
inline CostGrid cost_map(Vec2 robot_pos, Vec2 robot_vel, double probe_speed,
                         double probe_heading, const GridSpec& grid, const TtcParams& p) {
  if (!(grid.resolution > 0.0)) throw UsageError("cost_map: resolution must be positive");
  if (!(grid.x_max >= grid.x_min) || !(grid.y_max >= grid.y_min))
    throw UsageError("cost_map: empty grid");
  p.validate();
  CostGrid out;
  out.xs = grid_axis(grid.x_min, grid.x_max, grid.resolution);
  out.ys = grid_axis(grid.y_min, grid.y_max, grid.resolution);
  const Vec2 probe_vel{probe_speed * std::cos(probe_heading),
                       probe_speed * std::sin(probe_heading)};
  out.values.reserve(out.xs.size() * out.ys.size());
  for (double y : out.ys) {
    for (double x : out.xs) {
      RelativeState r{x - robot_pos.x, y - robot_pos.y, probe_vel.x - robot_vel.x,
                      probe_vel.y - robot_vel.y};
      out.values.push_back(instantaneous_ttc_cost(r, p));
    }
  }
  return out;
}

inline void write_cost_map_csv(const CostGrid& grid, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(17);
  os << "x,y,cost\n";
  for (std::size_t iy = 0; iy < grid.ys.size(); ++iy)
    for (std::size_t ix = 0; ix < grid.xs.size(); ++ix)
      os << grid.xs[ix] << ',' << grid.ys[iy] << ',' << grid.at(iy, ix) << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace riskbias
