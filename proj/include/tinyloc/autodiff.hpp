#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tinyloc/tensor.hpp"

namespace tinyloc::nn {

// Define-by-run reverse-mode tape. Values are computed eagerly when an op is
// applied; backward() walks the graph in reverse topological order. Leaves
// with requires_grad accumulate gradients; everything else is freed with the
// graph once the last Var handle drops.

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::string name;
  std::vector<std::shared_ptr<Node<T>>> inputs;
  std::function<void(Node<T>&)> backprop;  // pushes node.grad into inputs

  Tensor<T>& ensure_grad() {
    if (grad.data.empty()) grad = Tensor<T>::zeros(value.shape);
    return grad;
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  /// Leaf holding a trainable parameter.
  static Var param(Tensor<T> v, std::string name) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->name = std::move(name);
    return Var(n);
  }

  /// Leaf holding data (no gradient).
  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(n);
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::string& name() const { return node_->name; }
  std::shared_ptr<Node<T>> node() const { return node_; }

  void zero_grad() {
    if (node_ && !node_->grad.data.empty())
      std::fill(node_->grad.data.begin(), node_->grad.data.end(), T(0));
  }

  /// Reverse-mode sweep from this (scalar) node. Seeds d(this)/d(this) = 1.
  void backward() const {
    if (node_->value.count() != 1)
      throw std::invalid_argument("backward: root must be a scalar");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.push_back({node_.get(), 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->inputs.size()) {
        Node<T>* child = n->inputs[i++].get();
        if (child->requires_grad && !seen.count(child)) {
          seen.insert(child);
          stack.push_back({child, 0});
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad().data[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      // A node whose grad was never allocated received zero contribution
      // from every consumer (ops may skip writes for exact-zero gradients),
      // so its backprop could only propagate zeros: skip it.
      if (n->backprop && n->requires_grad && !n->grad.data.empty())
        n->backprop(*n);
    }
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <typename T>
std::shared_ptr<Node<T>> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
                                 std::function<void(Node<T>&)> backprop) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (auto& v : inputs) {
    n->inputs.push_back(v.node());
    n->requires_grad = n->requires_grad || v.node()->requires_grad;
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

}  // namespace detail

}  // namespace tinyloc::nn
