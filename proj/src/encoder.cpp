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

#include "ume/encoder.h"

#include <stdexcept>

namespace ume {

const char* task_name(Task task) {
  switch (task) {
    case Task::kDiar: return "diar";
    case Task::kSep: return "sep";
    case Task::kAsr: return "asr";
  }
  return "?";
}

const char* fusion_name(Fusion fusion) {
  switch (fusion) {
    case Fusion::kLastLayer: return "none";
    case Fusion::kWeightedSum: return "weighted_sum";
    case Fusion::kRwse: return "rwse";
  }
  return "?";
}

Fusion parse_fusion(const std::string& name) {
  if (name == "none") return Fusion::kLastLayer;
  if (name == "weighted_sum") return Fusion::kWeightedSum;
  if (name == "rwse") return Fusion::kRwse;
  throw std::invalid_argument("unknown fusion '" + name + "' (expected none, weighted_sum or rwse)");
}

void validate(const EncoderConfig& c, const std::string& path) {
  if (c.layers < 1) throw ConfigError(path + ".layers", "must be >= 1");
  if (c.d_model < 1) throw ConfigError(path + ".d_model", "must be positive");
  if (c.heads < 1 || c.d_model % c.heads != 0) {
    throw ConfigError(path + ".heads", "d_model must be divisible by heads");
  }
  if (c.conv_kernel < 1 || c.conv_kernel % 2 == 0) throw ConfigError(path + ".conv_kernel", "must be odd");
  if (c.ff_dim < 1) throw ConfigError(path + ".ff_dim", "must be positive");
}

Index encoder_frames(Index samples) { return samples / kFrontendStride; }

template <typename S>
EncoderBlock<S>::EncoderBlock(ParameterStore<S>& store, const std::string& name, const EncoderConfig& c,
                              Rng& rng)
    : norm1(store, name + ".norm1", c.d_model, rng),
      norm2(store, name + ".norm2", c.d_model, rng),
      attn(store, name + ".attn", c.d_model, c.heads, rng),
      depthwise(store, name + ".conv.depthwise", c.d_model, c.d_model, c.conv_kernel,
                ConvOptions{1, c.conv_kernel / 2, 1, c.d_model}, rng),
      pointwise(store, name + ".conv.pointwise", c.d_model, c.d_model, rng),
      ff(store, name + ".ff", c.d_model, c.ff_dim, rng) {}

template <typename S>
Tensor<S> EncoderBlock<S>::operator()(Binding<S>& b, const Tensor<S>& x) const {
  const Tensor<S> a = norm1(b, x);
  const Tensor<S> h = add(add(x, attn(b, a)), pointwise(b, relu(depthwise(b, a))));
  return add(h, ff(b, norm2(b, h)));
}

template <typename S>
Encoder<S>::Encoder(ParameterStore<S>& store, const EncoderConfig& config, Rng& rng)
    : config_(config),
      conv1_(store, "encoder.frontend.conv1", 1, config.d_model, 4, ConvOptions{2, 1, 1, 1}, rng),
      conv2_(store, "encoder.frontend.conv2", config.d_model, config.d_model, 4, ConvOptions{2, 1, 1, 1}, rng) {
  validate(config);
  for (int l = 0; l < config.layers; ++l) {
    blocks_.emplace_back(store, "encoder.layers." + std::to_string(l), config, rng);
  }
  if (config.fusion != Fusion::kLastLayer) {
    const std::string prefix = config.fusion == Fusion::kRwse ? "encoder.rwse_logits." : "encoder.ws_logits.";
    for (Task t : kAllTasks) {
      logits_[t] = &store.create(prefix + task_name(t), {config.layers}, Init::kZeros, rng);
    }
  }
}

template <typename S>
std::vector<Tensor<S>> Encoder<S>::encode_layers(Binding<S>& b, const Tensor<S>& waveform) const {
  Tensor<S> x = waveform.rank() == 1 ? reshape(waveform, {waveform.dim(0), 1}) : waveform;
  if (x.rank() != 2 || x.dim(1) != 1) throw ShapeError("encoder", {waveform.shape()}, "expected a mono waveform");
  if (x.dim(0) < kMinInputSamples) {
    throw ShapeError("encoder", {waveform.shape()},
                     "input of " + std::to_string(x.dim(0)) + " samples is shorter than the minimum of " +
                         std::to_string(kMinInputSamples));
  }
  Tensor<S> h = relu(conv2_(b, relu(conv1_(b, x))));
  if (h.dim(0) != encoder_frames(x.dim(0))) {
    throw std::logic_error("encoder frontend produced an unexpected frame count");
  }
  if (config_.positional_encoding) h = add_positional_encoding(h);
  std::vector<Tensor<S>> layers;
  for (const auto& block : blocks_) {
    h = block(b, h);
    layers.push_back(h);
  }
  return layers;
}

template <typename S>
Parameter<S>* Encoder<S>::logits(Task task) const {
  auto it = logits_.find(task);
  return it == logits_.end() ? nullptr : it->second;
}

template <typename S>
Tensor<S> Encoder<S>::fuse(Binding<S>& b, const std::vector<Tensor<S>>& layers, Task task) const {
  switch (config_.fusion) {
    case Fusion::kLastLayer: return layers.back();
    case Fusion::kWeightedSum: return weighted_sum(layers, b(logits(task)));
    case Fusion::kRwse: return rwse(weighted_sum(layers, b(logits(task))), layers.back());
  }
  throw std::logic_error("unknown fusion");
}

template <typename S>
EncoderOutput<S> Encoder<S>::forward(Binding<S>& b, const Tensor<S>& waveform, const std::vector<Task>& tasks) const {
  EncoderOutput<S> out;
  out.layers = encode_layers(b, waveform);
  for (Task t : tasks) out.fused[t] = fuse(b, out.layers, t);
  return out;
}

template <typename S>
Tensor<S> weighted_sum(const std::vector<Tensor<S>>& layers, const Tensor<S>& logits) {
  if (layers.empty()) throw std::invalid_argument("weighted_sum: no layers");
  if (logits.rank() != 1 || logits.dim(0) != static_cast<Index>(layers.size())) {
    throw ShapeError("weighted_sum", {logits.shape()},
                     "expected " + std::to_string(layers.size()) + " logits, one per layer");
  }
  const Shape shape = layers[0].shape();
  std::vector<Tensor<S>> rows;
  for (const auto& h : layers) {
    if (h.shape() != shape) throw ShapeError("weighted_sum", {shape, h.shape()}, "layer shapes differ");
    rows.push_back(reshape(h, {1, h.size()}));
  }
  const Index n = static_cast<Index>(layers.size());
  const Tensor<S> w = reshape(softmax(logits), {1, n});
  return reshape(matmul(w, concat(rows, 0)), shape);
}

template <typename S>
Tensor<S> rwse(const Tensor<S>& weighted, const Tensor<S>& last) {
  if (weighted.shape() != last.shape()) {
    throw ShapeError("rwse", {weighted.shape(), last.shape()}, "shapes must match");
  }
  return add(weighted, last);
}

#define UME_INSTANTIATE(S)                                                                   \
  template struct EncoderBlock<S>;                                                           \
  template class Encoder<S>;                                                                 \
  template Tensor<S> weighted_sum<S>(const std::vector<Tensor<S>>&, const Tensor<S>&);       \
  template Tensor<S> rwse<S>(const Tensor<S>&, const Tensor<S>&);

UME_INSTANTIATE(float)
UME_INSTANTIATE(double)

}  // namespace ume
