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

#include "ume/nn.h"

#include <cmath>

namespace ume {

template <typename S>
Linear<S>::Linear(ParameterStore<S>& store, const std::string& name, Index in, Index out, Rng& rng,
                  bool with_bias) {
  weight = &store.create(name + ".weight", {in, out}, Init::kXavier, rng);
  if (with_bias) bias = &store.create(name + ".bias", {out}, Init::kZeros, rng);
}

template <typename S>
Tensor<S> Linear<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  Tensor<S> y = matmul(x, b(weight));
  return bias ? add(y, b(bias)) : y;
}

template <typename S>
Conv1d<S>::Conv1d(ParameterStore<S>& store, const std::string& name, Index in, Index out, Index kernel,
                  ConvOptions opt, Rng& rng, bool with_bias)
    : options(opt) {
  weight = &store.create(name + ".weight", {out, in / opt.groups, kernel}, Init::kXavier, rng);
  if (with_bias) bias = &store.create(name + ".bias", {out}, Init::kZeros, rng);
}

template <typename S>
Tensor<S> Conv1d<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  return conv1d(x, b(weight), bias ? b(bias) : Tensor<S>(), options);
}

template <typename S>
LayerNorm<S>::LayerNorm(ParameterStore<S>& store, const std::string& name, Index width, Rng& rng) {
  gamma = &store.create(name + ".gamma", {width}, Init::kOnes, rng);
  beta = &store.create(name + ".beta", {width}, Init::kZeros, rng);
}

template <typename S>
Tensor<S> LayerNorm<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  return layer_norm(x, b(gamma), b(beta));
}

template <typename S>
PRelu<S>::PRelu(ParameterStore<S>& store, const std::string& name, Rng& rng) {
  slope = &store.create(name + ".slope", {1}, Init::kConstant, rng, S(0.25));
}

template <typename S>
Tensor<S> PRelu<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  return prelu(x, b(slope));
}

template <typename S>
SelfAttention<S>::SelfAttention(ParameterStore<S>& store, const std::string& name, Index width, Index h,
                                Rng& rng)
    : q(store, name + ".q", width, width, rng),
      k(store, name + ".k", width, width, rng, false),
      v(store, name + ".v", width, width, rng),
      out(store, name + ".out", width, width, rng),
      heads(h) {
  if (width % h != 0) {
    throw std::invalid_argument(name + ": width " + std::to_string(width) + " not divisible by " +
                                std::to_string(h) + " heads");
  }
}

template <typename S>
Tensor<S> SelfAttention<S>::operator()(Binding<S>& b, const Tensor<S>& x, bool causal) const {
  return out(b, attention(q(b, x), k(b, x), v(b, x), heads, causal));
}

template <typename S>
Tensor<S> SelfAttention<S>::cross(Binding<S>& b, const Tensor<S>& x, const Tensor<S>& memory) const {
  return out(b, attention(q(b, x), k(b, memory), v(b, memory), heads, false));
}

template <typename S>
FeedForward<S>::FeedForward(ParameterStore<S>& store, const std::string& name, Index width, Index hidden,
                            Rng& rng)
    : in(store, name + ".in", width, hidden, rng), out(store, name + ".out", hidden, width, rng) {}

template <typename S>
Tensor<S> FeedForward<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  return out(b, relu(in(b, x)));
}

template <typename S>
TransformerBlock<S>::TransformerBlock(ParameterStore<S>& store, const std::string& name, Index width,
                                      Index heads, Index hidden, Rng& rng)
    : norm1(store, name + ".norm1", width, rng),
      norm2(store, name + ".norm2", width, rng),
      attn(store, name + ".attn", width, heads, rng),
      ff(store, name + ".ff", width, hidden, rng) {}

template <typename S>
Tensor<S> TransformerBlock<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  Tensor<S> h = add(x, attn(b, norm1(b, x)));
  return add(h, ff(b, norm2(b, h)));
}

template <typename S>
Array<S> sinusoidal_encoding(Index frames, Index width) {
  Array<S> pe(frames * width);
  for (Index t = 0; t < frames; ++t)
    for (Index i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double a = static_cast<double>(t) * rate;
      pe(t * width + i) = static_cast<S>(i % 2 == 0 ? std::sin(a) : std::cos(a));
    }
  return pe;
}

template <typename S>
Tensor<S> add_positional_encoding(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("positional_encoding", {x.shape()}, "expected rank 2");
  return add(x, Tensor<S>::constant(x.shape(), sinusoidal_encoding<S>(x.dim(0), x.dim(1))));
}

#define UME_INSTANTIATE(S)                                                   \
  template struct Linear<S>;                                                 \
  template struct Conv1d<S>;                                                 \
  template struct LayerNorm<S>;                                              \
  template struct PRelu<S>;                                                  \
  template struct SelfAttention<S>;                                          \
  template struct FeedForward<S>;                                            \
  template struct TransformerBlock<S>;                                       \
  template Array<S> sinusoidal_encoding<S>(Index, Index);                    \
  template Tensor<S> add_positional_encoding<S>(const Tensor<S>&);

UME_INSTANTIATE(float)
UME_INSTANTIATE(double)

}  // namespace ume
