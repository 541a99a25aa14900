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

#include "acnv/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace acnv {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw std::invalid_argument("negative extent in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Scalar fill) : node_(std::make_shared<NodeType>()) {
  node_->value = Array::Constant(numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array values) : node_(std::make_shared<NodeType>()) {
  if (values.size() != numel(shape)) {
    throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + to_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, std::initializer_list<Scalar> values)
    : Tensor(std::move(shape), Eigen::Map<const Array>(values.begin(), Index(values.size())).eval()) {}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::parameter(Shape shape, Scalar fill) {
  Tensor t(std::move(shape), fill);
  t.node_->requires_grad = true;
  return t;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(int axis) const {
  if (axis < 0) axis += ndim();
  if (axis < 0 || axis >= ndim()) {
    throw std::out_of_range("axis out of range for shape " + to_string(shape()));
  }
  return node_->shape[axis];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + to_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
Scalar& Tensor<Scalar>::at(Index b, Index c, Index h, Index w) {
  const auto& s = node_->shape;
  return node_->value[((b * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(Index b, Index c, Index h, Index w) const {
  const auto& s = node_->shape;
  return node_->value[((b * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename Scalar>
Tensor<Scalar>& Tensor<Scalar>::set_requires_grad(bool on) {
  if (!node_->parents.empty() && !on) {
    throw std::logic_error("cannot clear requires_grad on an interior node");
  }
  node_->requires_grad = on;
  return *this;
}

template <typename Scalar>
const typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient");
  return node_->grad;
}

template <typename Scalar>
typename Tensor<Scalar>::Array& Tensor<Scalar>::grad() {
  node_->ensure_grad();
  return node_->grad;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  if (node_->grad.size() > 0) node_->grad.setZero();
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return Tensor(node_->shape, node_->value);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_node(std::shared_ptr<NodeType> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename Scalar>
void backward(const Tensor<Scalar>& root) {
  using NodeType = detail::Node<Scalar>;
  if (!root.defined() || root.size() != 1) {
    throw std::invalid_argument("backward requires a scalar root, got " +
                                (root.defined() ? to_string(root.shape()) : std::string("undefined")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> visited;
  std::vector<std::pair<NodeType*, size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (NodeType* node : order) {
    if (node->backward) node->grad = NodeType::Array::Zero(node->value.size());
  }
  root.node()->ensure_grad();
  root.node()->grad[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = *it;
    if (!node->backward) continue;
    node->backward(*node);
    // Interior gradients are not part of the result; release them early.
    node->grad.resize(0);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template void backward<float>(const Tensor<float>&);
template void backward<double>(const Tensor<double>&);

}  // namespace acnv
