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

// Differentiable primitives over Tensor<Scalar>. Rank-2 operands are
// time-major [frames x channels] throughout.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ume/tensor.h"

namespace ume {

// Elementwise. Shapes must match, or one operand's shape must equal the
// trailing dims of the other (leading-batch broadcasting only).
template <typename Scalar> Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar> Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);

template <typename Scalar> Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> relu(const Tensor<Scalar>& x);
/// Slope is a single value or one value per channel (last dim).
template <typename Scalar> Tensor<Scalar> prelu(const Tensor<Scalar>& x, const Tensor<Scalar>& slope);

/// [m x k] * [k x n].
template <typename Scalar> Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

struct ConvOptions {
  Index stride = 1;
  Index padding = 0;
  Index dilation = 1;
  Index groups = 1;  // 1 or the channel count (depthwise)
};

/// x [T x Cin], weight [Cout x Cin/groups x K], bias [Cout] or undefined.
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias = {}, ConvOptions opt = {});

/// x [T x Cin], weight [Cin x Cout x K] -> [(T-1)*stride - 2*padding + K x Cout].
template <typename Scalar>
Tensor<Scalar> conv_transpose1d(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                                const Tensor<Scalar>& bias = {}, Index stride = 1,
                                Index padding = 0);

/// Normalizes over the last dim, then applies scale and shift of that width.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, Scalar eps = Scalar(1e-5));

template <typename Scalar> Tensor<Scalar> softmax(const Tensor<Scalar>& x, int axis = -1);
template <typename Scalar> Tensor<Scalar> log_softmax(const Tensor<Scalar>& x, int axis = -1);

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, int axis = -1);
/// Half-open range [start, end) along `axis`.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, int axis, Index start, Index end);
template <typename Scalar> Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);
template <typename Scalar> Tensor<Scalar> transpose(const Tensor<Scalar>& x);

/// Full reduction to shape [1].
template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x);
/// Reduction over one axis of a rank-2 tensor; the axis is dropped.
template <typename Scalar> Tensor<Scalar> sum(const Tensor<Scalar>& x, int axis);
template <typename Scalar> Tensor<Scalar> mean(const Tensor<Scalar>& x, int axis);

/// Repeats every row (time step) `factor` times.
template <typename Scalar> Tensor<Scalar> upsample_repeat(const Tensor<Scalar>& x, Index factor);

/// Gathers rows of table [V x D].
template <typename Scalar>
Tensor<Scalar> embedding(const Tensor<Scalar>& table, std::span<const Index> ids);

/// Multi-head scaled dot-product attention. q [Tq x D], k [Tk x D],
/// v [Tk x Dv]; heads split D and Dv evenly. With `causal`, query i only
/// sees keys j <= i.
template <typename Scalar>
Tensor<Scalar> attention(const Tensor<Scalar>& q, const Tensor<Scalar>& k, const Tensor<Scalar>& v,
                         Index heads = 1, bool causal = false);

/// Sum over elements of binary cross-entropy between sigmoid(logits) and
/// constant targets, in the stable log-sum-exp form.
template <typename Scalar>
Tensor<Scalar> bce_with_logits(const Tensor<Scalar>& logits, const Tensor<Scalar>& targets);

/// Mean over rows of -log_probs[row, target[row]].
template <typename Scalar>
Tensor<Scalar> nll(const Tensor<Scalar>& log_probs, std::span<const Index> targets);

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& x) { return scale(x, s); }

using AttrValue = std::variant<Index, double, bool, std::vector<Index>>;
using Attrs = std::map<std::string, AttrValue, std::less<>>;

/// Dynamic entry point by primitive id, e.g. apply_primitive("conv1d",
/// {x, w}, {{"stride", Index{2}}}). Unknown ids throw std::invalid_argument.
template <typename Scalar>
Tensor<Scalar> apply_primitive(std::string_view kind, const std::vector<Tensor<Scalar>>& inputs,
                               const Attrs& attrs = {});

/// Ids accepted by apply_primitive.
const std::vector<std::string>& primitive_kinds();

}  // namespace ume
