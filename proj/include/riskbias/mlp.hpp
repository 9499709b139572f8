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
#include <string>
#include <vector>

#include "riskbias/autodiff.hpp"
#include "riskbias/rng.hpp"
#include "riskbias/tensor.hpp"

namespace riskbias {

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

/// Fully connected network, ReLU between layers, identity on the output.
struct MlpParams {
  std::vector<DenseLayer> layers;

  /// Layer widths including input and output, e.g. {20, 64, 64, 4}.
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (layers.empty()) return d;
    d.push_back(layers.front().in_dim());
    for (const auto& l : layers) d.push_back(l.out_dim());
    return d;
  }

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  static MlpParams zeros(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw UsageError("MlpParams needs at least two widths");
    MlpParams p;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      p.layers.push_back({Tensor(dims[i + 1], dims[i]), Tensor(1, dims[i + 1])});
    }
    return p;
  }

  /// Glorot-uniform weights, zero biases.
  static MlpParams glorot(const std::vector<std::size_t>& dims, Rng& rng) {
    MlpParams p = zeros(dims);
    for (auto& l : p.layers) {
      const double a = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
      for (double& w : l.weight.data()) w = rng.uniform(-a, a);
    }
    return p;
  }

  /// Named views for the optimizer and gradient checks, e.g. "decoder.l1.w".
  std::vector<ParamRef> parameters(const std::string& prefix) {
    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = prefix + ".l" + std::to_string(i);
      refs.push_back({base + ".w", &layers[i].weight});
      refs.push_back({base + ".b", &layers[i].bias});
    }
    return refs;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      if (!(a.layers[i].weight == b.layers[i].weight) ||
          !(a.layers[i].bias == b.layers[i].bias))
        return false;
    }
    return true;
  }
};

namespace detail {

inline void check_input(const MlpParams& params, std::size_t cols) {
  if (params.layers.empty()) throw DimensionError("mlp: network has no layers");
  if (cols != params.in_dim()) {
    throw DimensionError("mlp: layer 0 expects input width " +
                         std::to_string(params.in_dim()) + ", got " +
                         std::to_string(cols));
  }
  for (std::size_t i = 1; i < params.layers.size(); ++i) {
    if (params.layers[i].in_dim() != params.layers[i - 1].out_dim()) {
      throw DimensionError("mlp: layer " + std::to_string(i) + " expects width " +
                           std::to_string(params.layers[i].in_dim()) +
                           " but layer " + std::to_string(i - 1) + " produces " +
                           std::to_string(params.layers[i - 1].out_dim()));
    }
  }
}

}  // namespace detail

/// Records the forward pass on `tape`. With trainable=false the weights
/// enter as constants: gradients still flow to the input but no weight
/// gradients are computed.
inline Var mlp_forward(Tape& tape, const MlpParams& params, Var input,
                       bool trainable = true) {
  detail::check_input(params, tape.value(input).cols());
  Var h = input;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Var w = trainable ? tape.parameter(l.weight) : tape.constant(l.weight);
    Var b = trainable ? tape.parameter(l.bias) : tape.constant(l.bias);
    h = ad::affine(tape, h, w, b);
    if (i + 1 < params.layers.size()) h = ad::relu(tape, h);
  }
  return h;
}

/// Tape-free evaluation; bit-identical to mlp_forward's value.
inline Tensor mlp_eval(const MlpParams& params, const Tensor& input) {
  detail::check_input(params, input.cols());
  Matrix h = input.matrix();
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Matrix out = h * l.weight.matrix().transpose();
    out.rowwise() += l.bias.matrix().row(0);
    if (i + 1 < params.layers.size()) out = out.cwiseMax(0.0);
    h = std::move(out);
  }
  return Tensor(std::move(h));
}

}  // namespace riskbias
