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
#include <cstdint>
#include <span>
#include <vector>

#include "riskbias/autodiff.hpp"
#include "riskbias/errors.hpp"

namespace riskbias {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment state; m and v mirror the parameter list they were
/// created for.
struct OptimState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static OptimState for_params(std::span<const ParamRef> params,
                               AdamConfig config = {}) {
    OptimState s;
    s.config = config;
    for (const auto& p : params) {
      s.m.emplace_back(p.value->rows(), p.value->cols());
      s.v.emplace_back(p.value->rows(), p.value->cols());
    }
    return s;
  }
};

/// One bias-corrected Adam update in place.
inline void adam_step(std::span<const ParamRef> params, std::span<const Tensor> grads,
                      OptimState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].value->same_shape(grads[i]) || !grads[i].same_shape(state.m[i])) {
      throw DimensionError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw TrainingError("non-finite gradient for parameter " + params[i].name);
    }
  }
  state.step += 1;
  const AdamConfig& c = state.config;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.m[i].matrix().array();
    auto v = state.v[i].matrix().array();
    const auto g = grads[i].matrix().array();
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.square();
    if (c.learning_rate != 0.0) {
      params[i].value->matrix().array() -=
          c.learning_rate * (m / bc1) / ((v / bc2).sqrt() + c.epsilon);
    }
    if (!params[i].value->all_finite()) {
      throw TrainingError("parameter " + params[i].name + " became non-finite");
    }
  }
}

}  // namespace riskbias
