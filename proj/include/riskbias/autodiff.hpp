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
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "riskbias/errors.hpp"
#include "riskbias/tensor.hpp"

namespace riskbias {

class Tape;

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// vector is already a topological order and backward is a single reverse
/// sweep that visits every node at most once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  /// Differentiable leaf not tied to any parameter (used for z, inputs).
  Var leaf(Tensor value) { return push(std::move(value), {}, nullptr, true); }

  /// Leaf bound to an external parameter tensor. Gradients for the same
  /// parameter bound several times are summed by param_grad().
  Var parameter(const Tensor& param, bool trainable = true) {
    Var v = push(param, {}, nullptr, trainable);
    if (trainable) bindings_.emplace_back(&param, v.id);
    return v;
  }

  Var push(Tensor value, std::vector<int> inputs, BackwardFn fn,
           bool requires_grad) {
    Node node;
    node.value = std::move(value);
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// Appends an op node; it requires grad iff any input does.
  Var op(Tensor value, std::vector<int> inputs, BackwardFn fn) {
    bool rg = false;
    for (int i : inputs) rg = rg || nodes_[i].requires_grad;
    return push(std::move(value), std::move(inputs), rg ? std::move(fn) : nullptr,
                rg);
  }

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }
  const Tensor& value(int id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Gradient buffer of a node; empty Matrix when nothing flowed into it.
  const Matrix& grad_matrix(int id) const { return nodes_[id].grad; }

  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Tensor(n.value.rows(), n.value.cols());
    return Tensor(n.grad);
  }

  /// Summed gradient over every binding of `param`; zeros if unused.
  Tensor param_grad(const Tensor& param) const {
    Tensor g(param.rows(), param.cols());
    for (const auto& [ptr, id] : bindings_) {
      if (ptr == &param && nodes_[id].grad.size() != 0) {
        g.matrix() += nodes_[id].grad;
      }
    }
    return g;
  }

  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = Matrix(g.matrix());
    } else {
      n.grad += g.matrix();
    }
  }

  void backward(Var output, const Tensor& output_grad) {
    if (nodes_.empty()) throw UsageError("backward called on an empty tape");
    if (!output.valid() || static_cast<std::size_t>(output.id) >= nodes_.size()) {
      throw UsageError("backward: output does not belong to this tape");
    }
    if (!output_grad.same_shape(value(output))) {
      throw DimensionError("backward: output_grad " + shape_string(output_grad) +
                           " does not match output " +
                           shape_string(value(output)));
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    accumulate(output.id, output_grad.matrix());
    for (int i = output.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
  }

  /// Backward from a scalar (1x1) output with seed 1.
  void backward(Var output) { backward(output, Tensor(1, 1, 1.0)); }

 private:
  struct Node {
    Tensor value;
    Matrix grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<const Tensor*, int>> bindings_;
};

// Differentiable primitives. Binary ops broadcast the second operand when it
// is 1x1, 1xn or Bx1.
namespace ad {

namespace detail {

inline Matrix broadcast_to(const Matrix& b, Eigen::Index rows, Eigen::Index cols) {
  if (b.rows() == rows && b.cols() == cols) return b;
  if (b.rows() == 1 && b.cols() == 1) return Matrix::Constant(rows, cols, b(0, 0));
  if (b.rows() == 1 && b.cols() == cols) return b.replicate(rows, 1);
  if (b.cols() == 1 && b.rows() == rows) return b.replicate(1, cols);
  throw DimensionError("cannot broadcast [" + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + "] to [" + std::to_string(rows) +
                       "x" + std::to_string(cols) + "]");
}

inline Matrix reduce_to(const Matrix& g, Eigen::Index rows, Eigen::Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

}  // namespace detail

/// x[B x in] * w^T[in x out] + b[1 x out].
inline Var affine(Tape& t, Var x, Var w, Var b) {
  const Matrix& X = t.value(x).matrix();
  const Matrix& W = t.value(w).matrix();
  const Matrix& B = t.value(b).matrix();
  if (X.cols() != W.cols() || B.rows() != 1 || B.cols() != W.rows()) {
    throw DimensionError("affine: input " + shape_string(t.value(x)) +
                         " weight " + shape_string(t.value(w)) + " bias " +
                         shape_string(t.value(b)));
  }
  Matrix out = X * W.transpose();
  out.rowwise() += B.row(0);
  return t.op(Tensor(std::move(out)), {x.id, w.id, b.id}, [](Tape& tp, int self) {
    const auto& in = tp.inputs(self);
    const Matrix& g = tp.grad_matrix(self);
    if (tp.requires_grad(in[0])) tp.accumulate(in[0], g * tp.value(in[1]).matrix());
    if (tp.requires_grad(in[1]))
      tp.accumulate(in[1], g.transpose() * tp.value(in[0]).matrix());
    if (tp.requires_grad(in[2])) tp.accumulate(in[2], g.colwise().sum());
  });
}

inline Var relu(Tape& t, Var a) {
  Matrix out = t.value(a).matrix().cwiseMax(0.0);
  return t.op(Tensor(std::move(out)), {a.id}, [](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    const Matrix& x = tp.value(in).matrix();
    tp.accumulate(in, (x.array() > 0.0).select(tp.grad_matrix(self), 0.0));
  });
}

inline Var exp(Tape& t, Var a) {
  Matrix out = t.value(a).matrix().array().exp().matrix();
  return t.op(Tensor(std::move(out)), {a.id}, [](Tape& tp, int self) {
    tp.accumulate(tp.inputs(self)[0],
                  tp.grad_matrix(self).cwiseProduct(tp.value(self).matrix()));
  });
}

inline Var square(Tape& t, Var a) {
  Matrix out = t.value(a).matrix().array().square().matrix();
  return t.op(Tensor(std::move(out)), {a.id}, [](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    tp.accumulate(in, 2.0 * tp.grad_matrix(self).cwiseProduct(tp.value(in).matrix()));
  });
}

/// Elementwise clamp; gradient passes only strictly inside (lo, hi).
inline Var clamp(Tape& t, Var a, double lo, double hi) {
  Matrix out = t.value(a).matrix().cwiseMax(lo).cwiseMin(hi);
  return t.op(Tensor(std::move(out)), {a.id}, [lo, hi](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    const auto x = tp.value(in).matrix().array();
    tp.accumulate(in, ((x > lo) && (x < hi)).select(tp.grad_matrix(self), 0.0));
  });
}

inline Var scale(Tape& t, Var a, double c) {
  Matrix out = c * t.value(a).matrix();
  return t.op(Tensor(std::move(out)), {a.id}, [c](Tape& tp, int self) {
    tp.accumulate(tp.inputs(self)[0], c * tp.grad_matrix(self));
  });
}

inline Var add_scalar(Tape& t, Var a, double c) {
  Matrix out = t.value(a).matrix().array() + c;
  return t.op(Tensor(std::move(out)), {a.id}, [](Tape& tp, int self) {
    tp.accumulate(tp.inputs(self)[0], tp.grad_matrix(self));
  });
}

inline Var add(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a).matrix();
  Matrix out = A + detail::broadcast_to(t.value(b).matrix(), A.rows(), A.cols());
  return t.op(Tensor(std::move(out)), {a.id, b.id}, [](Tape& tp, int self) {
    const auto& in = tp.inputs(self);
    const Matrix& g = tp.grad_matrix(self);
    tp.accumulate(in[0], g);
    if (tp.requires_grad(in[1])) {
      const Tensor& bv = tp.value(in[1]);
      tp.accumulate(in[1], detail::reduce_to(g, bv.matrix().rows(), bv.matrix().cols()));
    }
  });
}

inline Var sub(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a).matrix();
  Matrix out = A - detail::broadcast_to(t.value(b).matrix(), A.rows(), A.cols());
  return t.op(Tensor(std::move(out)), {a.id, b.id}, [](Tape& tp, int self) {
    const auto& in = tp.inputs(self);
    const Matrix& g = tp.grad_matrix(self);
    tp.accumulate(in[0], g);
    if (tp.requires_grad(in[1])) {
      const Tensor& bv = tp.value(in[1]);
      tp.accumulate(in[1],
                    -detail::reduce_to(g, bv.matrix().rows(), bv.matrix().cols()));
    }
  });
}

inline Var mul(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a).matrix();
  Matrix out =
      A.cwiseProduct(detail::broadcast_to(t.value(b).matrix(), A.rows(), A.cols()));
  return t.op(Tensor(std::move(out)), {a.id, b.id}, [](Tape& tp, int self) {
    const auto& in = tp.inputs(self);
    const Matrix& g = tp.grad_matrix(self);
    const Matrix& A = tp.value(in[0]).matrix();
    const Matrix& Bm = tp.value(in[1]).matrix();
    if (tp.requires_grad(in[0]))
      tp.accumulate(in[0], g.cwiseProduct(detail::broadcast_to(Bm, A.rows(), A.cols())));
    if (tp.requires_grad(in[1]))
      tp.accumulate(in[1], detail::reduce_to(g.cwiseProduct(A), Bm.rows(), Bm.cols()));
  });
}

/// Elementwise a / b with the same broadcasting as mul.
inline Var div(Tape& t, Var a, Var b) {
  const Matrix& A = t.value(a).matrix();
  Matrix out =
      A.cwiseQuotient(detail::broadcast_to(t.value(b).matrix(), A.rows(), A.cols()));
  return t.op(Tensor(std::move(out)), {a.id, b.id}, [](Tape& tp, int self) {
    const auto& in = tp.inputs(self);
    const Matrix& g = tp.grad_matrix(self);
    const Matrix& A = tp.value(in[0]).matrix();
    const Matrix& Bm = tp.value(in[1]).matrix();
    const Matrix Bb = detail::broadcast_to(Bm, A.rows(), A.cols());
    if (tp.requires_grad(in[0])) tp.accumulate(in[0], g.cwiseQuotient(Bb));
    if (tp.requires_grad(in[1])) {
      Matrix gb = -(g.cwiseProduct(A).array() / Bb.array().square()).matrix();
      tp.accumulate(in[1], detail::reduce_to(gb, Bm.rows(), Bm.cols()));
    }
  });
}

inline Var sum(Tape& t, Var a) {
  Tensor out(1, 1, t.value(a).matrix().sum());
  return t.op(std::move(out), {a.id}, [](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    const Tensor& x = tp.value(in);
    tp.accumulate(in, Matrix::Constant(x.matrix().rows(), x.matrix().cols(),
                                       tp.grad_matrix(self)(0, 0)));
  });
}

inline Var mean(Tape& t, Var a) {
  const double n = static_cast<double>(t.value(a).size());
  return scale(t, sum(t, a), 1.0 / n);
}

/// B x n -> B x 1.
inline Var row_sum(Tape& t, Var a) {
  Matrix out = t.value(a).matrix().rowwise().sum();
  return t.op(Tensor(std::move(out)), {a.id}, [](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    tp.accumulate(in, tp.grad_matrix(self).replicate(1, tp.value(in).matrix().cols()));
  });
}

inline Var concat_cols(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  const Eigen::Index rows = t.value(parts[0]).matrix().rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).matrix().rows() != rows)
      throw DimensionError("concat_cols: row count mismatch");
    cols += t.value(p).matrix().cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  Eigen::Index c = 0;
  for (Var p : parts) {
    const Matrix& m = t.value(p).matrix();
    out.middleCols(c, m.cols()) = m;
    c += m.cols();
    ids.push_back(p.id);
  }
  return t.op(Tensor(std::move(out)), ids, [](Tape& tp, int self) {
    const Matrix& g = tp.grad_matrix(self);
    Eigen::Index c0 = 0;
    for (int in : tp.inputs(self)) {
      const Eigen::Index w = tp.value(in).matrix().cols();
      if (tp.requires_grad(in)) tp.accumulate(in, g.middleCols(c0, w));
      c0 += w;
    }
  });
}

inline Var concat_cols(Tape& t, std::initializer_list<Var> parts) {
  std::vector<Var> v(parts);
  return concat_cols(t, std::span<const Var>(v));
}

inline Var slice_cols(Tape& t, Var a, std::size_t start, std::size_t count) {
  const Matrix& A = t.value(a).matrix();
  if (start + count > static_cast<std::size_t>(A.cols()))
    throw DimensionError("slice_cols: range exceeds " + shape_string(t.value(a)));
  Matrix out = A.middleCols(static_cast<Eigen::Index>(start),
                            static_cast<Eigen::Index>(count));
  return t.op(Tensor(std::move(out)), {a.id}, [start, count](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    const Matrix& A = tp.value(in).matrix();
    Matrix g = Matrix::Zero(A.rows(), A.cols());
    g.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(count)) =
        tp.grad_matrix(self);
    tp.accumulate(in, g);
  });
}

/// Repeats each row k times consecutively: B x n -> (B*k) x n.
inline Var repeat_rows(Tape& t, Var a, std::size_t k) {
  const Matrix& A = t.value(a).matrix();
  const Eigen::Index kk = static_cast<Eigen::Index>(k);
  Matrix out(A.rows() * kk, A.cols());
  for (Eigen::Index r = 0; r < A.rows(); ++r)
    out.middleRows(r * kk, kk) = A.row(r).replicate(kk, 1);
  return t.op(Tensor(std::move(out)), {a.id}, [kk](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    const Matrix& g = tp.grad_matrix(self);
    Matrix ga(g.rows() / kk, g.cols());
    for (Eigen::Index r = 0; r < ga.rows(); ++r)
      ga.row(r) = g.middleRows(r * kk, kk).colwise().sum();
    tp.accumulate(in, ga);
  });
}

/// Averages consecutive groups of k rows: (B*k) x n -> B x n.
inline Var group_mean_rows(Tape& t, Var a, std::size_t k) {
  const Matrix& A = t.value(a).matrix();
  const Eigen::Index kk = static_cast<Eigen::Index>(k);
  if (k == 0 || A.rows() % kk != 0)
    throw DimensionError("group_mean_rows: rows not divisible by group size");
  Matrix out(A.rows() / kk, A.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    out.row(r) = A.middleRows(r * kk, kk).colwise().sum() / static_cast<double>(k);
  return t.op(Tensor(std::move(out)), {a.id}, [kk](Tape& tp, int self) {
    const int in = tp.inputs(self)[0];
    const Matrix& g = tp.grad_matrix(self);
    Matrix ga(g.rows() * kk, g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      ga.middleRows(r * kk, kk) = (g.row(r) / static_cast<double>(kk)).replicate(kk, 1);
    tp.accumulate(in, ga);
  });
}

}  // namespace ad

/// A named, mutable view of one trainable tensor.
struct ParamRef {
  std::string name;
  Tensor* value;
};

/// Max over all parameter entries of |analytic - numeric| / (|numeric| + 1e-8)
/// where numeric is a central difference with step fd_step. The loss function
/// must bind each parameter with Tape::parameter and be deterministic.
inline double gradient_check(const std::function<Var(Tape&)>& loss_fn,
                             std::span<const ParamRef> params, double fd_step) {
  auto evaluate = [&]() {
    Tape t;
    Var l = loss_fn(t);
    const double v = t.value(l)(0, 0);
    if (!std::isfinite(v)) throw NumericError("gradient_check: non-finite loss");
    return v;
  };
  Tape tape;
  Var loss = loss_fn(tape);
  if (tape.value(loss).size() != 1) throw UsageError("gradient_check: loss must be scalar");
  if (!std::isfinite(tape.value(loss)(0, 0)))
    throw NumericError("gradient_check: non-finite loss");
  tape.backward(loss);
  double worst = 0.0;
  for (const ParamRef& p : params) {
    const Tensor analytic = tape.param_grad(*p.value);
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      double& w = p.value->data()[i];
      const double saved = w;
      w = saved + fd_step;
      const double up = evaluate();
      w = saved - fd_step;
      const double down = evaluate();
      w = saved;
      const double numeric = (up - down) / (2.0 * fd_step);
      const double err =
          std::abs(analytic.data()[i] - numeric) / (std::abs(numeric) + 1e-8);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace riskbias
