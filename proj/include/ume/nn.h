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

// Small parameterized layers shared by the encoder and task heads. Each
// layer registers its parameters in a ParameterStore at construction and is
// applied through a per-graph Binding.

#include <string>

#include "ume/ops.h"
#include "ume/param.h"

namespace ume {

template <typename Scalar>
struct Linear {
  Parameter<Scalar>* weight = nullptr;  // [in x out]
  Parameter<Scalar>* bias = nullptr;    // [out] or null

  Linear() = default;
  Linear(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out, Rng& rng,
         bool with_bias = true);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

template <typename Scalar>
struct Conv1d {
  Parameter<Scalar>* weight = nullptr;  // [out x in/groups x K]
  Parameter<Scalar>* bias = nullptr;
  ConvOptions options;

  Conv1d() = default;
  Conv1d(ParameterStore<Scalar>& store, const std::string& name, Index in, Index out, Index kernel,
         ConvOptions options, Rng& rng, bool with_bias = true);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

template <typename Scalar>
struct LayerNorm {
  Parameter<Scalar>* gamma = nullptr;
  Parameter<Scalar>* beta = nullptr;

  LayerNorm() = default;
  LayerNorm(ParameterStore<Scalar>& store, const std::string& name, Index width, Rng& rng);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

template <typename Scalar>
struct PRelu {
  Parameter<Scalar>* slope = nullptr;

  PRelu() = default;
  PRelu(ParameterStore<Scalar>& store, const std::string& name, Rng& rng);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

template <typename Scalar>
struct SelfAttention {
  Linear<Scalar> q, k, v, out;
  Index heads = 1;

  SelfAttention() = default;
  SelfAttention(ParameterStore<Scalar>& store, const std::string& name, Index width, Index heads, Rng& rng);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x, bool causal = false) const;
  /// Attends from x to a separate memory sequence.
  Tensor<Scalar> cross(Binding<Scalar>& b, const Tensor<Scalar>& x, const Tensor<Scalar>& memory) const;
};

template <typename Scalar>
struct FeedForward {
  Linear<Scalar> in, out;

  FeedForward() = default;
  FeedForward(ParameterStore<Scalar>& store, const std::string& name, Index width, Index hidden, Rng& rng);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

/// Pre-norm transformer block: x + MHSA(LN x), then + FF(LN .).
template <typename Scalar>
struct TransformerBlock {
  LayerNorm<Scalar> norm1, norm2;
  SelfAttention<Scalar> attn;
  FeedForward<Scalar> ff;

  TransformerBlock() = default;
  TransformerBlock(ParameterStore<Scalar>& store, const std::string& name, Index width, Index heads,
                   Index hidden, Rng& rng);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

/// Standard sinusoidal table [frames x width].
template <typename Scalar>
Array<Scalar> sinusoidal_encoding(Index frames, Index width);

template <typename Scalar>
Tensor<Scalar> add_positional_encoding(const Tensor<Scalar>& x);

}  // namespace ume
