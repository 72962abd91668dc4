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

#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace ume {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Index shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when a primitive receives incompatible operands. Carries the
/// primitive id and the operand shapes it was given.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string primitive, std::vector<Shape> shapes, const std::string& detail);

  const std::string& primitive() const { return primitive_; }
  const std::vector<Shape>& shapes() const { return shapes_; }

 private:
  std::string primitive_;
  std::vector<Shape> shapes_;
};

/// Misuse of the differentiation graph (non-scalar loss, second backward).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Scalar>
struct Node;

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
struct Node {
  Shape shape;
  Array<Scalar> value;
  Array<Scalar> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool consumed = false;
  std::string kind = "leaf";
  std::vector<NodePtr<Scalar>> parents;
  std::function<void(Node&)> backward;
};

/// Handle to a node of the reverse-mode graph. Copies share the node.
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(NodePtr<Scalar> node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, Array<Scalar> value);
  static Tensor zeros(Shape shape);
  static Tensor leaf(Shape shape, Array<Scalar> value, bool requires_grad = true);
  static Tensor scalar(Scalar v) { return constant({1}, Array<Scalar>::Constant(1, v)); }
  /// Rank-2 constant copied from a matrix expression.
  template <typename Derived>
  static Tensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    RowMatrix<Scalar> rm = m.template cast<Scalar>();
    return constant({rm.rows(), rm.cols()},
                    Eigen::Map<const Array<Scalar>>(rm.data(), rm.size()));
  }

  /// Builds the result node of a primitive. The node records its parents
  /// only when at least one of them participates in differentiation.
  static Tensor from_op(std::string kind, Shape shape, Array<Scalar> value,
                        std::vector<Tensor> parents, std::function<void(Node<Scalar>&)> backward);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  Index dim(int axis) const;
  Index size() const { return node_->value.size(); }
  const std::string& kind() const { return node_->kind; }
  bool requires_grad() const { return node_->requires_grad; }

  const Array<Scalar>& value() const { return node_->value; }
  /// Gradient after backward; zeros when nothing reached this node.
  Array<Scalar> grad() const;
  bool has_grad() const { return node_->grad.size() > 0; }
  Scalar item() const;
  /// Row-major [rows x cols] view; rank-1 tensors are a single row.
  MatrixMap matrix() const;

  const NodePtr<Scalar>& node() const { return node_; }

 private:
  NodePtr<Scalar> node_;
};

/// Adds `g` into the gradient slot of `parent` when it requires grad.
template <typename Scalar, typename Derived>
void accumulate_grad(Node<Scalar>& parent, const Eigen::ArrayBase<Derived>& g) {
  if (!parent.requires_grad) return;
  if (parent.grad.size() == 0) {
    parent.grad = g;
  } else {
    parent.grad += g;
  }
}

/// Reverse sweep from a one-element loss. Every reachable leaf with
/// requires_grad receives d(loss)/d(leaf); the graph is consumed.
template <typename Scalar>
void backward(const Tensor<Scalar>& loss);

}  // namespace ume
