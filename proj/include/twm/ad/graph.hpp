#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "twm/ad/tensor.hpp"

namespace twm::ad {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer of parent i, or nullptr when that parent is constant.
  Tensor<T>* parent_grad(std::size_t i) {
    Node& p = *parents[i];
    if (!p.requires_grad) return nullptr;
    if (p.grad.size() != p.value.size()) p.grad = Tensor<T>(p.value.shape());
    return &p.grad;
  }
  const Tensor<T>& parent_value(std::size_t i) const { return parents[i]->value; }
};

/// Handle to a value in the autodiff graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient buffer; zero-filled if nothing was accumulated yet.
  Tensor<T>& grad() {
    if (node_->grad.size() != node_->value.size()) node_->grad = Tensor<T>(node_->value.shape());
    return node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
Var<T> constant(Tensor<T> v) {
  return Var<T>(std::move(v), false);
}

template <typename T>
Var<T> parameter(Tensor<T> v) {
  return Var<T>(std::move(v), true);
}

/// Creates a result node. Parents and backward closure are kept only if some
/// parent needs a gradient, so inference graphs hold no history.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  for (const auto& p : parents) node->requires_grad = node->requires_grad || p.requires_grad();
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

/// Reverse-mode sweep from `root`, seeding d(root)/d(root) = seed (ones by default).
template <typename T>
void backward(const Var<T>& root, const Tensor<T>* seed = nullptr) {
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  Node<T>& r = *root.node();
  if (seed) {
    if (seed->shape() != r.value.shape()) throw ShapeError("backward: seed shape mismatch");
    r.grad = *seed;
  } else {
    r.grad = Tensor<T>(r.value.shape(), T(1));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    // Interior gradients are no longer needed once propagated.
    if (n->backward) n->grad = Tensor<T>();
  }
}

}  // namespace twm::ad
