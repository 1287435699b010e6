// Copyright 2026 The STAMP Authors
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

// Dense row-major tensors with a reverse-mode gradient tape.
//
// Every tensor produced by an op that has at least one grad-requiring input
// keeps references to its inputs and a closure that pushes its gradient back
// into them. Nodes carry a global creation sequence number; since an op's
// inputs always exist before its output, visiting reachable nodes in
// decreasing sequence order replays the tape in reverse, which guarantees a
// node is processed only after all of its consumers.
//
// Tensors that never touched a grad-requiring input carry no tape links and
// are immutable after construction, so they can be shared across threads.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "stamp/errors.hpp"

namespace stamp {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

inline std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::uint64_t sequence = next_sequence();
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
  }
  bool is_leaf() const { return !backward_fn; }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    if (numel(shape) != values.size()) {
      throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                       std::to_string(numel(shape)) + " elements but " +
                       std::to_string(values.size()) + " values were given");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T{0}, requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
  }

  static Tensor from_node(NodePtr node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const NodePtr& node() const noexcept { return node_; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }

  std::span<const T> data() const { return node_->data; }
  /// In-place access for optimizers and initializers. Mutating a tensor that
  /// is still referenced by a live tape invalidates that tape's gradients.
  std::span<T> mutable_data() { return node_->data; }

  T item() const {
    if (size() != 1) throw UsageError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  T operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
  }

  /// Copy of the values with no tape attachment.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }

  /// Reverse-mode sweep from a scalar. Leaf gradients accumulate (+=);
  /// interior gradients are released afterwards.
  void backward() const {
    if (size() != 1) {
      throw UsageError("backward() needs a scalar loss, got shape " + to_string(shape()));
    }
    if (!node_->requires_grad) {
      throw UsageError("backward() on a tensor that is not connected to any parameter");
    }

    std::vector<detail::Node<T>*> order;
    std::unordered_set<const detail::Node<T>*> seen;
    std::vector<detail::Node<T>*> stack{node_.get()};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto* n = stack.back();
      stack.pop_back();
      order.push_back(n);
      for (const auto& p : n->parents) {
        if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
      }
    }
    std::sort(order.begin(), order.end(),
              [](const auto* a, const auto* b) { return a->sequence > b->sequence; });

    node_->ensure_grad();
    node_->grad[0] += T{1};
    for (auto* n : order) {
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    for (auto* n : order) {
      if (!n->is_leaf()) std::vector<T>().swap(n->grad);
    }
  }

 private:
  NodePtr node_;
};

namespace detail {
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

/// While alive, ops on this thread record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Builds an op output. If any input requires grad, the output joins the
/// tape with the given backward closure; otherwise it is a plain value.
template <typename T, typename Backward>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      std::initializer_list<const Tensor<T>*> inputs, Backward&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs_grad = false;
  if (grad_mode())
    for (const auto* in : inputs) needs_grad = needs_grad || in->requires_grad();
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto* in : inputs) node->parents.push_back(in->node());
    node->backward_fn = std::forward<Backward>(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T, typename Backward>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      Backward&& backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  bool needs_grad = false;
  if (grad_mode())
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (needs_grad) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward_fn = std::forward<Backward>(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

/// Gradient buffer of the i-th parent, or nullptr if it does not need one.
template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

template <typename T>
const T* parent_data(const Node<T>& self, std::size_t i) {
  return self.parents[i]->data.data();
}

}  // namespace detail
}  // namespace stamp
