/* Copyright 2026 The ACNV Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef ACNV_TENSOR_HPP_
#define ACNV_TENSOR_HPP_

#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace acnv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

Index numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Whether newly created operation results record a backward closure.
bool grad_enabled();

/// Disables graph recording for the lifetime of the guard (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <typename Scalar>
struct Node {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape;
  Array value;
  // Empty until the first backward pass touches this node.
  Array grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad = Array::Zero(value.size());
  }
  template <typename Derived>
  void accumulate(const Eigen::ArrayBase<Derived>& g) {
    ensure_grad();
    grad += g;
  }
};

}  // namespace detail

/// Dense row-major N-d array that doubles as a node in a reverse-mode graph.
///
/// Copies share the underlying node; use `detach()` for a value copy. The
/// last extent varies fastest, so a 4-d tensor is laid out (B, C, H, W).
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using NodeType = detail::Node<Scalar>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, Array values);
  Tensor(Shape shape, std::initializer_list<Scalar> values);

  /// Leaf tensor that collects gradients.
  static Tensor parameter(Shape shape, Scalar fill = Scalar(0));

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }

  const Array& values() const { return node_->value; }
  Array& values() { return node_->value; }
  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }
  Scalar item() const;

  Scalar& operator[](Index i) { return node_->value[i]; }
  Scalar operator[](Index i) const { return node_->value[i]; }
  Scalar& at(Index b, Index c, Index h, Index w);
  Scalar at(Index b, Index c, Index h, Index w) const;

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const Array& grad() const;
  Array& grad();
  void zero_grad();

  /// Value copy with no history.
  Tensor detach() const;

  const std::shared_ptr<NodeType>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<NodeType> node);

 private:
  std::shared_ptr<NodeType> node_;
};

/// Runs reverse-mode accumulation from a scalar root.
///
/// Leaf gradients add onto whatever they already hold; interior gradients are
/// recomputed from zero on every call.
template <typename Scalar>
void backward(const Tensor<Scalar>& root);

namespace detail {

/// Wraps a freshly computed value as an operation result, attaching the
/// backward closure only when some input wants gradients.
template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, typename Node<Scalar>::Array value,
                           std::vector<Tensor<Scalar>> inputs,
                           std::function<void(Node<Scalar>&)> backward_fn) {
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in.requires_grad()) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    for (auto& in : inputs) {
      if (in.requires_grad()) node->parents.push_back(in.node());
    }
    node->backward = std::move(backward_fn);
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace acnv

#endif  // ACNV_TENSOR_HPP_
