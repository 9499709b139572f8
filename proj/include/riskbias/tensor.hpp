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

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "riskbias/errors.hpp"

namespace riskbias {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense rank-2 array of doubles stored row-major. Rows are batch elements,
/// columns are features; vectors are 1 x n.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : m_(Matrix::Constant(static_cast<Eigen::Index>(rows),
                            static_cast<Eigen::Index>(cols), fill)) {}
  explicit Tensor(Matrix m) : m_(std::move(m)) {}

  Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    m_.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    Eigen::Index i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged tensor literal");
      Eigen::Index j = 0;
      for (double v : row) m_(i, j++) = v;
      ++i;
    }
  }

  static Tensor row(std::span<const double> values) {
    Tensor t(1, values.size());
    std::copy(values.begin(), values.end(), t.m_.data());
    return t;
  }

  std::size_t rows() const { return static_cast<std::size_t>(m_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(m_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(m_.size()); }
  std::vector<std::size_t> shape() const { return {rows(), cols()}; }
  bool empty() const { return m_.size() == 0; }

  double& operator()(std::size_t r, std::size_t c) {
    return m_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }
  double operator()(std::size_t r, std::size_t c) const {
    return m_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  }

  std::span<double> data() { return {m_.data(), size()}; }
  std::span<const double> data() const { return {m_.data(), size()}; }

  Matrix& matrix() { return m_; }
  const Matrix& matrix() const { return m_; }

  bool all_finite() const { return m_.allFinite(); }
  bool same_shape(const Tensor& o) const {
    return rows() == o.rows() && cols() == o.cols();
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a.data()[i] != b.data()[i]) return false;
    }
    return true;
  }

 private:
  Matrix m_;
};

inline std::string shape_string(const Tensor& t) {
  return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

}  // namespace riskbias
