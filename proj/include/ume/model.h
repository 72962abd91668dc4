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

// Unified model: shared encoder plus diarization, separation and ASR heads.
// All heads are always constructed so checkpoints have one layout; a task
// that is not requested is simply not evaluated.

#include <optional>
#include <vector>

#include "ume/asr.h"
#include "ume/diar.h"
#include "ume/encoder.h"
#include "ume/mixture_sim.h"
#include "ume/sep.h"

namespace ume {

struct ModelConfig {
  int speakers = 2;
  EncoderConfig encoder;
  SepConfig sep;
  AsrConfig asr;
};

void validate(const ModelConfig& config, const std::string& path = "model");

template <typename Scalar>
struct ItemLosses {
  std::optional<Tensor<Scalar>> diar, sep, asr;
  Permutation diar_perm, sep_perm, asr_perm;
  bool asr_skipped = false;
};

struct Inference {
  FrameLabels probs;                         // [T^enc x C]
  std::vector<Waveform> estimates;           // C x [T]
  std::vector<std::vector<int>> hypotheses;  // greedy CTC per stream
  std::vector<std::vector<float>> token_scores;  // CTC log-probability per hypothesis token
};

template <typename Scalar>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore<Scalar>& store() { return store_; }
  const ParameterStore<Scalar>& store() const { return store_; }
  const Encoder<Scalar>& encoder() const { return encoder_; }
  const DiarHead<Scalar>& diar() const { return diar_; }
  const SepHead<Scalar>& sep() const { return sep_; }
  const AsrHead<Scalar>& asr() const { return asr_; }

  /// Builds the loss graph of every requested task for one item.
  ItemLosses<Scalar> losses(Binding<Scalar>& b, const MixtureSample& item, const std::vector<Task>& tasks) const;

  /// Forward pass of all heads (no loss); used by eval and infer.
  Inference infer(const Waveform& mixture) const;

 private:
  ModelConfig config_;
  ParameterStore<Scalar> store_;
  Encoder<Scalar> encoder_;
  DiarHead<Scalar> diar_;
  SepHead<Scalar> sep_;
  AsrHead<Scalar> asr_;
};

/// True when some permutation pairs every ASR stream with a target it can
/// align (depends only on lengths).
bool asr_feasible(Index samples, const std::vector<std::vector<int>>& targets);

/// Parameters that no task other than `task` reads ("diar.", "sep.", "asr."
/// prefixes and that task's encoder fusion weights).
bool exclusive_to(const std::string& name, Task task);

}  // namespace ume
