// Copyright 2026 The UME Authors
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

#include "ume/tensor.h"

#include <sstream>
#include <unordered_set>

namespace ume {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

std::string shape_error_message(const std::string& primitive, const std::vector<Shape>& shapes,
                                const std::string& detail) {
  std::ostringstream os;
  os << primitive << ": " << detail << " (operands:";
  for (const auto& s : shapes) os << ' ' << shape_str(s);
  os << ')';
  return os.str();
}

}  // namespace

ShapeError::ShapeError(std::string primitive, std::vector<Shape> shapes, const std::string& detail)
    : std::invalid_argument(shape_error_message(primitive, shapes, detail)),
      primitive_(std::move(primitive)),
      shapes_(std::move(shapes)) {}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::constant(Shape shape, Array<Scalar> value) {
  if (shape_size(shape) != value.size()) {
    throw ShapeError("constant", {shape}, "data length " + std::to_string(value.size()) +
                                              " does not match shape");
  }
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::zeros(Shape shape) {
  const Index n = shape_size(shape);
  return constant(std::move(shape), Array<Scalar>::Zero(n));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::leaf(Shape shape, Array<Scalar> value, bool requires_grad) {
  Tensor t = constant(std::move(shape), std::move(value));
  t.node_->requires_grad = requires_grad;
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_op(std::string kind, Shape shape, Array<Scalar> value,
                                       std::vector<Tensor> parents,
                                       std::function<void(Node<Scalar>&)> backward_fn) {
  if (shape_size(shape) != value.size()) {
    throw ShapeError(kind, {shape}, "result length does not match result shape");
  }
  auto node = std::make_shared<Node<Scalar>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->kind = std::move(kind);
  for (const auto& p : parents) {
    if (p.node_->consumed) {
      throw GraphError(node->kind + ": operand belongs to an already consumed graph");
    }
    node->requires_grad = node->requires_grad || p.node_->requires_grad;
  }
  if (node->requires_grad) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

template <typename Scalar>
Index Tensor<Scalar>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("dim", {shape()}, "axis out of range");
  return node_->shape[static_cast<std::size_t>(axis)];
}

template <typename Scalar>
Array<Scalar> Tensor<Scalar>::grad() const {
  if (node_->grad.size() == 0) return Array<Scalar>::Zero(size());
  return node_->grad;
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw ShapeError("item", {shape()}, "tensor has more than one element");
  return node_->value(0);
}

template <typename Scalar>
typename Tensor<Scalar>::MatrixMap Tensor<Scalar>::matrix() const {
  const Index cols = rank() == 0 ? 1 : node_->shape.back();
  const Index rows = cols == 0 ? 0 : size() / cols;
  return MatrixMap(node_->value.data(), rows, cols);
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw GraphError("backward: loss must have exactly one element, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  Node<Scalar>* root = loss.node().get();
  if (root->consumed) throw GraphError("backward: graph already consumed");
  if (!root->requires_grad) {
    root->consumed = true;
    return;
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen.count(parent)) {
        if (parent->consumed) throw GraphError("backward: graph already consumed");
        seen.insert(parent);
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad = Array<Scalar>::Ones(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* node = *it;
    if (node->backward && node->grad.size() > 0) node->backward(*node);
  }
  // Interior state is released; leaves keep their gradients.
  for (Node<Scalar>* node : order) {
    if (!node->parents.empty()) {
      node->consumed = true;
      node->parents.clear();
      node->backward = nullptr;
      node->grad.resize(0);
    }
  }
  root->consumed = true;
}

template class Tensor<float>;
template class Tensor<double>;
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace ume
