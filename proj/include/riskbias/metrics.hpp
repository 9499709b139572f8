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
#include <span>
#include <vector>

#include "riskbias/errors.hpp"
#include "riskbias/trajectory.hpp"

namespace riskbias {

/// Distance between final positions.
inline double fde(const Trajectory& forecast, const Trajectory& gt) {
  if (forecast.size() != gt.size() || gt.size() == 0)
    throw UsageError("fde: forecast has " + std::to_string(forecast.size()) +
                     " steps, ground truth has " + std::to_string(gt.size()));
  return (forecast.back() - gt.back()).norm();
}

inline double min_fde(std::span<const Trajectory> forecasts, const Trajectory& gt) {
  if (forecasts.empty()) throw UsageError("min_fde: need at least one forecast");
  double best = fde(forecasts[0], gt);
  for (std::size_t i = 1; i < forecasts.size(); ++i) best = std::min(best, fde(forecasts[i], gt));
  return best;
}

/// Pairwise (cascade) summation: result does not depend on how the values
/// were produced, only on their order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;      // sample standard deviation
  double se = 0.0;          // standard error of the mean
  double ci95 = 0.0;        // half-width, normal approximation
};

inline Summary summarize(std::span<const double> v) {
  if (v.empty()) throw UsageError("summarize: no values");
  Summary s;
  s.n = v.size();
  s.mean = pairwise_sum(v) / static_cast<double>(s.n);
  if (s.n > 1) {
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) sq[i] = (v[i] - s.mean) * (v[i] - s.mean);
    s.stddev = std::sqrt(pairwise_sum(sq) / static_cast<double>(s.n - 1));
    s.se = s.stddev / std::sqrt(static_cast<double>(s.n));
  }
  s.ci95 = 1.959963984540054 * s.se;
  return s;
}

/// Linear-interpolation quantile (type 7), q in [0, 1].
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw UsageError("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace riskbias
