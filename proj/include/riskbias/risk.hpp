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
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "riskbias/errors.hpp"

namespace riskbias {

enum class RiskKind { kCvar, kEntropic, kMean };

struct RiskSpec {
  RiskKind kind = RiskKind::kCvar;
  double sigma = 0.0;

  void validate() const {
    if (!std::isfinite(sigma)) throw DomainError("risk level must be finite");
    if (kind == RiskKind::kCvar && (sigma < 0.0 || sigma > 1.0))
      throw DomainError("CVaR risk level must lie in [0, 1], got " + std::to_string(sigma));
    if (kind == RiskKind::kEntropic && sigma == 0.0)
      throw DomainError("entropic risk level must be non-zero");
  }
};

inline std::string to_string(RiskKind k) {
  switch (k) {
    case RiskKind::kCvar: return "cvar";
    case RiskKind::kEntropic: return "entropic";
    case RiskKind::kMean: return "mean";
  }
  return "?";
}

inline RiskKind parse_risk_kind(const std::string& s) {
  if (s == "cvar") return RiskKind::kCvar;
  if (s == "entropic") return RiskKind::kEntropic;
  if (s == "mean") return RiskKind::kMean;
  throw UsageError("unknown risk kind '" + s + "'");
}

namespace detail {

inline void check_costs(std::span<const double> costs) {
  if (costs.empty()) throw UsageError("risk estimate needs at least one cost sample");
  for (double c : costs)
    if (!std::isfinite(c)) throw DomainError("non-finite cost sample");
}

}  // namespace detail

inline double mean_cost(std::span<const double> costs) {
  detail::check_costs(costs);
  return std::accumulate(costs.begin(), costs.end(), 0.0) /
         static_cast<double>(costs.size());
}

/// Empirical CVaR: the exact minimizer over t of
///   t + E[max(0, C - t)] / (1 - sigma)
/// for the uniform distribution on the samples. This is the mean of the
/// worst (1 - sigma) N samples, with the boundary sample weighted by the
/// fractional part when (1 - sigma) N is not an integer. Whenever
/// (1 - sigma) N <= 1 (in particular sigma = 1) the result is the max.
inline double cvar_mc(std::span<const double> costs, double sigma) {
  detail::check_costs(costs);
  if (!(sigma >= 0.0 && sigma <= 1.0))
    throw DomainError("CVaR risk level must lie in [0, 1], got " + std::to_string(sigma));
  std::vector<double> sorted(costs.begin(), costs.end());
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<>());
  const double n = static_cast<double>(sorted.size());
  double mass = (1.0 - sigma) * n;
  const double nearest = std::round(mass);
  if (std::abs(mass - nearest) < 1e-9) mass = nearest;
  if (mass <= 1.0) return sorted.front();
  const auto whole = static_cast<std::size_t>(std::floor(mass));
  double s = 0.0;
  for (std::size_t i = 0; i < whole; ++i) s += sorted[i];
  const double frac = mass - static_cast<double>(whole);
  if (frac > 0.0) s += frac * sorted[whole];
  return s / mass;
}

/// (1/sigma) log mean exp(sigma c), evaluated with a max shift.
inline double entropic_risk(std::span<const double> costs, double sigma) {
  detail::check_costs(costs);
  if (sigma == 0.0 || !std::isfinite(sigma))
    throw DomainError("entropic risk needs a non-zero level; use the mean instead");
  double peak = -std::numeric_limits<double>::infinity();
  for (double c : costs) peak = std::max(peak, sigma * c);
  double acc = 0.0;
  for (double c : costs) acc += std::exp(sigma * c - peak);
  return (peak + std::log(acc / static_cast<double>(costs.size()))) / sigma;
}

inline double risk(const RiskSpec& spec, std::span<const double> costs) {
  switch (spec.kind) {
    case RiskKind::kCvar: return cvar_mc(costs, spec.sigma);
    case RiskKind::kEntropic: return entropic_risk(costs, spec.sigma);
    case RiskKind::kMean: return mean_cost(costs);
  }
  throw UsageError("unknown risk kind");
}

/// Expected cost of a finite discrete distribution with the given
/// probability weights (weights must sum to one).
inline double weighted_expectation(std::span<const double> costs,
                                   std::span<const double> weights) {
  if (costs.size() != weights.size() || costs.empty())
    throw UsageError("weighted_expectation: size mismatch or empty");
  double s = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) s += costs[i] * weights[i];
  return s;
}

}  // namespace riskbias
