#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "marvel/common.hpp"

namespace marvel {

template <typename S>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int idx = -1;

  const MatX<S>& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  S scalar() const;
};

// Reverse-mode tape. Nodes are appended in forward order, which is already a
// topological order, so backward() is a single reverse sweep that visits each
// node exactly once. Gradients are allocated lazily: a node untouched by the
// sweep (or a frozen leaf) keeps an empty grad.
template <typename S>
class Tape {
 public:
  using Mat = MatX<S>;
  using BackFn = std::function<void(Tape&, int)>;

  struct Node {
    Mat value;
    Mat grad;  // empty until first accumulation
    bool requires_grad = false;
    BackFn backward;  // empty for leaves
  };

  int size() const { return static_cast<int>(nodes_.size()); }

  Var<S> leaf(Mat value, bool requires_grad) {
    return push(std::move(value), requires_grad, BackFn());
  }

  Var<S> constant(Mat value) { return leaf(std::move(value), false); }

  Var<S> push(Mat value, bool requires_grad, BackFn backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Mat& value(int idx) const { return nodes_[idx].value; }
  const Mat& value(Var<S> v) const { return nodes_[v.idx].value; }
  bool requires_grad(int idx) const { return nodes_[idx].requires_grad; }

  // Zero matrix if the node never received gradient.
  Mat grad(Var<S> v) const {
    const Node& n = nodes_[v.idx];
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool has_grad(Var<S> v) const { return nodes_[v.idx].grad.size() != 0; }

  // Adds `delta` into the gradient of node `idx` when that node wants one.
  template <typename Expr>
  void accum(int idx, const Expr& delta) {
    Node& n = nodes_[idx];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += delta;
  }

  const Mat& grad_ref(int idx) const { return nodes_[idx].grad; }

  void backward(Var<S> loss) {
    if (loss.tape != this) throw ContractError("backward: loss from another tape");
    Node& top = nodes_[loss.idx];
    if (top.value.rows() != 1 || top.value.cols() != 1)
      throw ContractError("backward: loss must be a scalar (1x1) tensor");
    if (!top.requires_grad) return;  // nothing trainable upstream
    if (top.grad.size() == 0) top.grad = Mat::Ones(1, 1);
    for (int i = loss.idx; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
  }

 private:
  std::vector<Node> nodes_;
};

template <typename S>
const MatX<S>& Var<S>::value() const {
  return tape->value(idx);
}

template <typename S>
bool Var<S>::requires_grad() const {
  return tape->requires_grad(idx);
}

template <typename S>
S Var<S>::scalar() const {
  const MatX<S>& v = value();
  if (v.size() != 1) throw ContractError("scalar(): tensor is not 1x1");
  return v(0, 0);
}

}  // namespace marvel
