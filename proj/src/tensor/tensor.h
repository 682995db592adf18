/**
 * @file tensor.h
 * @brief Dense row-major tensors with reverse-mode automatic differentiation.
 *
 * A Tensor<S> is a shared handle to a node holding values, an optional
 * gradient accumulator, and the backward closure that produced it. Operations
 * (see ops.h) record parent links while gradient mode is enabled; backward()
 * replays the recorded graph once in reverse topological order.
 */
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "common/error.h"
#include "common/rng.h"

namespace quartet {

using Shape = std::vector<int>;

inline int64_t shapeNumel(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

inline std::string shapeStr(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ",";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

/// Thread-local switch for graph recording. Off during validation/generation.
inline bool& gradModeEnabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool previous;
  NoGradGuard() : previous(gradModeEnabled()) { gradModeEnabled() = false; }
  ~NoGradGuard() { gradModeEnabled() = previous; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on demand, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<S>>> parents;
  std::function<void(TensorNode<S>&)> backward_fn;

  void ensureGrad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<S>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape) {
    auto node = std::make_shared<TensorNode<S>>();
    node->value.assign(static_cast<size_t>(shapeNumel(shape)), S(0));
    node->shape = std::move(shape);
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, S fill) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.node_->value) v = fill;
    return t;
  }

  static Tensor fromVector(Shape shape, std::vector<S> values) {
    if (static_cast<int64_t>(values.size()) != shapeNumel(shape)) {
      throw ShapeError("fromVector: " + std::to_string(values.size()) +
                       " values for shape " + shapeStr(shape));
    }
    auto node = std::make_shared<TensorNode<S>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
  }

  static Tensor randn(Shape shape, Rng& rng, double stddev) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.node_->value) v = static_cast<S>(rng.normal() * stddev);
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<S> value() { return node_->value; }
  std::span<const S> value() const { return node_->value; }
  std::span<S> grad() {
    node_->ensureGrad();
    return node_->grad;
  }
  std::span<const S> gradView() const { return node_->grad; }

  bool requiresGrad() const { return node_->requires_grad; }
  Tensor& setRequiresGrad(bool flag) {
    node_->requires_grad = flag;
    if (flag) node_->ensureGrad();
    return *this;
  }

  void zeroGrad() {
    if (node_->requires_grad) {
      node_->ensureGrad();
      std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }
  }

  /// Scalar extraction; tensor must hold exactly one value.
  S item() const {
    if (numel() != 1) {
      throw ShapeError("item() on tensor of shape " + shapeStr(shape()));
    }
    return node_->value[0];
  }

  const std::shared_ptr<TensorNode<S>>& node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<S>> node_;
};

/// Allocates the result of an op, wiring parents and the backward closure
/// only while gradient recording is active and some parent needs gradients.
template <typename S>
Tensor<S> makeOpResult(Shape shape, std::vector<S> value,
                       std::vector<Tensor<S>> parents,
                       std::function<void(TensorNode<S>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<S>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool track = false;
  if (gradModeEnabled()) {
    for (const auto& p : parents) {
      if (p.defined() && p.requiresGrad()) track = true;
    }
  }
  if (track) {
    node->requires_grad = true;
    node->backward_fn = std::move(backward_fn);
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
  }
  return Tensor<S>(std::move(node));
}

/// Reverse-mode sweep from a scalar root. Visits each recorded node exactly
/// once in reverse topological order, accumulating into parent gradients.
template <typename S>
void backward(const Tensor<S>& root) {
  if (root.numel() != 1) {
    throw ShapeError("backward() requires a scalar root, got " + shapeStr(root.shape()));
  }
  // Iterative post-order DFS over parent links.
  std::vector<TensorNode<S>*> order;
  std::unordered_set<TensorNode<S>*> visited;
  std::vector<std::pair<TensorNode<S>*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    if (next_child < node->parents.size()) {
      TensorNode<S>* child = node->parents[next_child++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensureGrad();
  root.node()->grad[0] += S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<S>* node = *it;
    if (node->backward_fn) {
      for (auto& parent : node->parents) {
        if (parent->requires_grad) parent->ensureGrad();
      }
      node->backward_fn(*node);
    }
  }
}

}  // namespace quartet
