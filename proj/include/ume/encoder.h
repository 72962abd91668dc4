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

// Shared speech encoder: a strided-conv frontend (subsampling 4) followed by
// L blocks with parallel self-attention and depthwise-conv branches, plus
// per-task fusion of the layer outputs (residual weighted-sum encoding).

#include <array>
#include <map>
#include <string>
#include <vector>

#include "ume/config_error.h"
#include "ume/nn.h"

namespace ume {

enum class Task { kDiar, kSep, kAsr };
inline constexpr std::array<Task, 3> kAllTasks = {Task::kDiar, Task::kSep, Task::kAsr};
const char* task_name(Task task);

/// How H^enc[task] is formed from the layer outputs.
enum class Fusion {
  kLastLayer,    // H_L
  kWeightedSum,  // sum_l softmax(w)_l H_l
  kRwse,         // weighted sum + H_L
};
const char* fusion_name(Fusion fusion);
Fusion parse_fusion(const std::string& name);  // "none" | "weighted_sum" | "rwse"

struct EncoderConfig {
  int layers = 4;
  Index d_model = 32;
  Index heads = 2;
  Index conv_kernel = 3;
  Index ff_dim = 64;
  bool positional_encoding = false;  // sinusoidal, added after the frontend
  Fusion fusion = Fusion::kRwse;
};

void validate(const EncoderConfig& config, const std::string& path = "model.encoder");

inline constexpr Index kFrontendStride = 4;
inline constexpr Index kMinInputSamples = 8;

/// Frames produced by the frontend for T input samples: floor(T / 4).
Index encoder_frames(Index samples);

template <typename Scalar>
struct EncoderBlock {
  LayerNorm<Scalar> norm1, norm2;
  SelfAttention<Scalar> attn;
  Conv1d<Scalar> depthwise;
  Linear<Scalar> pointwise;
  FeedForward<Scalar> ff;

  EncoderBlock() = default;
  EncoderBlock(ParameterStore<Scalar>& store, const std::string& name, const EncoderConfig& c, Rng& rng);
  Tensor<Scalar> operator()(Binding<Scalar>& b, const Tensor<Scalar>& x) const;
};

template <typename Scalar>
struct EncoderOutput {
  std::vector<Tensor<Scalar>> layers;    // H_1..H_L, each [T^enc x D]
  std::map<Task, Tensor<Scalar>> fused;  // H^enc per requested task
};

template <typename Scalar>
class Encoder {
 public:
  Encoder(ParameterStore<Scalar>& store, const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// waveform [T] or [T x 1] -> L layer outputs.
  std::vector<Tensor<Scalar>> encode_layers(Binding<Scalar>& b, const Tensor<Scalar>& waveform) const;

  /// Layer outputs plus the fused representation for each requested task.
  EncoderOutput<Scalar> forward(Binding<Scalar>& b, const Tensor<Scalar>& waveform,
                                const std::vector<Task>& tasks) const;

  Tensor<Scalar> fuse(Binding<Scalar>& b, const std::vector<Tensor<Scalar>>& layers, Task task) const;

  /// Fusion weights of a task; null in kLastLayer mode.
  Parameter<Scalar>* logits(Task task) const;

 private:
  EncoderConfig config_;
  Conv1d<Scalar> conv1_, conv2_;
  std::vector<EncoderBlock<Scalar>> blocks_;
  std::map<Task, Parameter<Scalar>*> logits_;
};

/// sum_l softmax(logits)_l * layers[l]. logits has shape [L].
template <typename Scalar>
Tensor<Scalar> weighted_sum(const std::vector<Tensor<Scalar>>& layers, const Tensor<Scalar>& logits);

/// H^ws + H_L.
template <typename Scalar>
Tensor<Scalar> rwse(const Tensor<Scalar>& weighted, const Tensor<Scalar>& last);

}  // namespace ume
