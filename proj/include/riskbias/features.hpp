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

#include <cstddef>
#include <span>
#include <vector>

#include "riskbias/sim.hpp"
#include "riskbias/tensor.hpp"
#include "riskbias/trajectory.hpp"

namespace riskbias {

/// Robot positions enter the biased encoder divided by this many meters.
inline constexpr double kRobotFeatureScale = 0.1;

/// Network-ready tensors for a batch of scenes. Every trajectory is
/// expressed relative to the pedestrian's last observed position.
struct SceneBatch {
  Tensor past;         // B x 2P
  Tensor future;       // B x 2F, ground truth
  Tensor robot;        // B x 2F, robot future in the same frame (meters)
  Tensor robot_past;   // B x 2P, robot past in the same frame (meters)
  std::vector<Vec2> origins;
};

inline void write_row(Tensor& t, std::size_t row, const std::vector<double>& v, double scale = 1.0) {
  for (std::size_t j = 0; j < v.size(); ++j) t(row, j) = v[j] * scale;
}

inline SceneBatch make_batch(std::span<const Scene* const> scenes, int past_steps,
                             int future_steps) {
  const std::size_t b = scenes.size();
  SceneBatch out;
  out.past = Tensor(b, 2 * static_cast<std::size_t>(past_steps));
  out.future = Tensor(b, 2 * static_cast<std::size_t>(future_steps));
  out.robot = Tensor(b, 2 * static_cast<std::size_t>(future_steps));
  out.robot_past = Tensor(b, 2 * static_cast<std::size_t>(past_steps));
  for (std::size_t i = 0; i < b; ++i) {
    const Scene& s = *scenes[i];
    if (static_cast<int>(s.x.size()) != past_steps || static_cast<int>(s.y.size()) != future_steps ||
        static_cast<int>(s.y_robot.size()) != past_steps + future_steps)
      throw DimensionError("scene trajectory lengths do not match the model");
    const Vec2 o = s.x.back();
    out.origins.push_back(o);
    write_row(out.past, i, s.x.flat_relative(o));
    write_row(out.future, i, s.y.flat_relative(o));
    const auto robot = s.y_robot.flat_relative(o);
    for (int k = 0; k < 2 * future_steps; ++k) out.robot(i, k) = robot[2 * past_steps + k];
    for (int k = 0; k < 2 * past_steps; ++k) out.robot_past(i, k) = robot[k];
  }
  return out;
}

inline SceneBatch make_batch(std::span<const Scene> scenes, int past_steps, int future_steps) {
  std::vector<const Scene*> ptrs;
  ptrs.reserve(scenes.size());
  for (const auto& s : scenes) ptrs.push_back(&s);
  return make_batch(std::span<const Scene* const>(ptrs), past_steps, future_steps);
}

/// Single-row relative tensors for ad-hoc queries.
inline Tensor past_row(const Trajectory& x) { return Tensor::row(x.flat_relative(x.back())); }

inline Tensor relative_row(const Trajectory& t, Vec2 origin) {
  return Tensor::row(t.flat_relative(origin));
}

}  // namespace riskbias
