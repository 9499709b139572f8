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
#include <span>
#include <vector>

#include "riskbias/errors.hpp"
#include "riskbias/tensor.hpp"

namespace riskbias {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
  double norm() const { return std::hypot(x, y); }
};

/// Planar positions sampled every dt seconds.
struct Trajectory {
  double dt = 0.1;
  std::vector<Vec2> positions;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  const Vec2& back() const { return positions.back(); }

  /// Forward differences; the last step repeats the previous velocity.
  std::vector<Vec2> velocities() const {
    std::vector<Vec2> v(positions.size());
    if (positions.size() < 2) return v;
    for (std::size_t t = 0; t + 1 < positions.size(); ++t)
      v[t] = (1.0 / dt) * (positions[t + 1] - positions[t]);
    v.back() = v[v.size() - 2];
    return v;
  }

  /// Interleaved [x0, y0, x1, y1, ...].
  std::vector<double> flat() const {
    std::vector<double> f;
    f.reserve(2 * positions.size());
    for (const auto& p : positions) {
      f.push_back(p.x);
      f.push_back(p.y);
    }
    return f;
  }

  /// Same, shifted so that `origin` maps to (0, 0).
  std::vector<double> flat_relative(Vec2 origin) const {
    std::vector<double> f;
    f.reserve(2 * positions.size());
    for (const auto& p : positions) {
      f.push_back(p.x - origin.x);
      f.push_back(p.y - origin.y);
    }
    return f;
  }

  static Trajectory from_flat(std::span<const double> xy, double dt, Vec2 origin = {}) {
    if (xy.size() % 2 != 0) throw UsageError("flat trajectory needs an even length");
    Trajectory t;
    t.dt = dt;
    t.positions.reserve(xy.size() / 2);
    for (std::size_t i = 0; i + 1 < xy.size(); i += 2)
      t.positions.push_back({xy[i] + origin.x, xy[i + 1] + origin.y});
    return t;
  }

  friend bool operator==(const Trajectory& a, const Trajectory& b) {
    return a.dt == b.dt && a.positions == b.positions;
  }
};

}  // namespace riskbias
