#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "daformer/core/errors.hpp"
#include "daformer/core/tensor.hpp"

namespace daformer {

template <typename Scalar>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Mat<Scalar>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool needs_grad() const { return tape->needs_grad(id); }
  Mat<Scalar>& grad() const { return tape->grad(id); }
};

/// Reverse-mode recording of matrix operations.
///
/// A non-recording tape computes values only: no backward closures are stored
/// and no parameter gradient can be touched through it. Teacher and reference
/// networks always run on non-recording tapes.
template <typename Scalar>
class Tape {
 public:
  /// Closure receiving the tape and the id of the node that owns it.
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var<Scalar> constant(Mat<Scalar> value) { return push(std::move(value), false, {}); }

  /// Leaf whose gradient is tracked (used for gradient checks on inputs).
  Var<Scalar> variable(Mat<Scalar> value) { return push(std::move(value), true, {}); }

  Var<Scalar> push(Mat<Scalar> value, bool needs_grad, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = recording_ && needs_grad;
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat<Scalar>& value(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Gradient buffer of a node, allocated as zeros on first access.
  Mat<Scalar>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Backpropagates from a 1x1 root. Parameter gradients accumulate into
  /// their Param::grad buffers through the closures recorded by each op.
  void backward(Var<Scalar> root) {
    if (!recording_) throw StateError("backward on a non-recording tape");
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward root must be a scalar");
    if (!nodes_[root.id].needs_grad) return;
    grad(root.id)(0, 0) += Scalar(1);
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    bool needs_grad = false;
    Backward backward;
  };

  bool recording_;
  std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Structural and elementwise ops

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("add: shape mismatch");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), a.needs_grad() || b.needs_grad(),
                      [ia, ib](Tape<Scalar>& t, int self) {
                        if (t.needs_grad(ia)) t.grad(ia) += t.grad(self);
                        if (t.needs_grad(ib)) t.grad(ib) += t.grad(self);
                      });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, a.needs_grad(), [ia, s](Tape<Scalar>& t, int self) {
    t.grad(ia) += t.grad(self) * s;
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  const int ia = a.id;
  return a.tape->push(a.value().cwiseMax(Scalar(0)), a.needs_grad(),
                      [ia](Tape<Scalar>& t, int self) {
                        t.grad(ia).array() +=
                            (t.value(ia).array() > Scalar(0)).template cast<Scalar>() *
                            t.grad(self).array();
                      });
}

/// Exact (erf-based) GELU.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  const int ia = a.id;
  const Scalar inv_sqrt2 = Scalar(0.70710678118654752440);
  Mat<Scalar> out = a.value().unaryExpr([inv_sqrt2](Scalar x) {
    return Scalar(0.5) * x * (Scalar(1) + std::erf(x * inv_sqrt2));
  });
  return a.tape->push(std::move(out), a.needs_grad(), [ia, inv_sqrt2](Tape<Scalar>& t, int self) {
    const Scalar inv_sqrt_2pi = Scalar(0.39894228040143267794);
    Mat<Scalar> d = t.value(ia).unaryExpr([inv_sqrt2, inv_sqrt_2pi](Scalar x) {
      return Scalar(0.5) * (Scalar(1) + std::erf(x * inv_sqrt2)) +
             x * inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
    });
    t.grad(ia).array() += d.array() * t.grad(self).array();
  });
}

/// Horizontal concatenation (channel axis for feature maps).
template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    needs = needs || p.needs_grad();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    layout.emplace_back(p.id, offset);
    offset += p.cols();
  }
  return parts.front().tape->push(std::move(out), needs, [layout](Tape<Scalar>& t, int self) {
    for (const auto& [id, off] : layout) {
      if (!t.needs_grad(id)) continue;
      t.grad(id) += t.grad(self).middleCols(off, t.value(id).cols());
    }
  });
}

/// Vertical concatenation (stacking token sets of several images).
template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool needs = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
    needs = needs || p.needs_grad();
  }
  Mat<Scalar> out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> layout;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    layout.emplace_back(p.id, offset);
    offset += p.rows();
  }
  return parts.front().tape->push(std::move(out), needs, [layout](Tape<Scalar>& t, int self) {
    for (const auto& [id, off] : layout) {
      if (!t.needs_grad(id)) continue;
      t.grad(id) += t.grad(self).middleRows(off, t.value(id).rows());
    }
  });
}

/// Column means, i.e. global average pooling of a feature map.
template <typename Scalar>
Var<Scalar> mean_rows(Var<Scalar> a) {
  const int ia = a.id;
  const Scalar inv = Scalar(1) / Scalar(a.rows());
  Mat<Scalar> out = a.value().colwise().sum() * inv;
  return a.tape->push(std::move(out), a.needs_grad(), [ia, inv](Tape<Scalar>& t, int self) {
    t.grad(ia).rowwise() += t.grad(self).row(0) * inv;
  });
}

}  // namespace daformer
