// selkd/tensor.hpp

// Copyright 2026  The selkd Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "selkd/common.hpp"

namespace selkd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {

// One value in the computation graph. Nodes that require gradients keep
// handles to their inputs plus a closure that pushes this node's gradient
// back into them.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(const Node&)> backward_fn;

  double* ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

using NodePtr = std::shared_ptr<Node>;

}  // namespace detail

/// Handle to an n-dimensional array of doubles with an optional gradient.
/// Copies share storage; use detach() or clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("tensor: shape " + shape_str(shape) + " holds " +
                           std::to_string(shape_size(shape)) +
                           " values, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0),
                  requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t cols() const {
    return node_->shape.empty() ? 1 : node_->shape.back();
  }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const {
    if (size() != 1) {
      throw ContractError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  /// Copy of the values without gradient tracking.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }
  /// Copy of the values as a fresh leaf that keeps the requires_grad flag.
  Tensor clone() const { return Tensor(shape(), node_->value, requires_grad()); }

  const detail::NodePtr& handle() const { return node_; }

  static Tensor from_node(detail::NodePtr n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  detail::NodePtr node_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

namespace detail {

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

// Builds an op result. The node is attached to the graph only when at least
// one input requires gradients; otherwise the closure is dropped.
template <class Fn>
Tensor make_result(Shape shape, std::vector<double> value,
                   std::initializer_list<const Tensor*> inputs, Fn&& fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_mode()) {
    for (const Tensor* t : inputs) {
      if (t->requires_grad()) node->requires_grad = true;
    }
  }
  if (node->requires_grad) {
    for (const Tensor* t : inputs) node->inputs.push_back(t->handle());
    node->backward_fn = std::forward<Fn>(fn);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

/// Recorded operations reachable from a root, in topological order: every
/// node appears after all of its inputs.
class Tape {
 public:
  static Tape record(const Tensor& root) {
    Tape tape;
    if (!root.defined() || !root.requires_grad()) return tape;
    std::unordered_set<const detail::Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<detail::NodePtr, std::size_t>> stack;
    stack.emplace_back(root.handle(), 0);
    seen.insert(root.handle().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        const auto& in = node->inputs[next++];
        if (in->requires_grad && seen.insert(in.get()).second) {
          stack.emplace_back(in, 0);
        }
      } else {
        tape.nodes_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  std::span<const detail::NodePtr> nodes() const { return nodes_; }

  bool contains(const Tensor& t) const {
    return std::any_of(nodes_.begin(), nodes_.end(),
                       [&](const auto& n) { return n == t.handle(); });
  }

 private:
  std::vector<detail::NodePtr> nodes_;
};

/// Reverse-mode accumulation from a scalar loss. Leaf gradients accumulate
/// across calls until zero_grad().
inline void backward(const Tensor& loss, const Tape& tape) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : "<none>"));
  }
  if (!loss.requires_grad() || tape.empty() ||
      tape.nodes().back() != loss.handle()) {
    throw ContractError("backward: loss is not on the tape");
  }
  loss.handle()->ensure_grad()[0] += 1.0;
  const auto nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    const auto& n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

inline void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward: loss must be a scalar");
  }
  backward(loss, Tape::record(loss));
}

inline void zero_grads(ParamList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace selkd
