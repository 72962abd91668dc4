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

// Multi-speaker ASR branch: one speaker-differentiating encoder per output
// stream, a shared CTC projection, a shared attention decoder and the
// permutation-invariant CTC/attention objective. Vocabulary ids: 0 is the
// CTC blank, 1..V are tokens, V+1 is sos and V+2 is eos.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ume/config_error.h"
#include "ume/nn.h"
#include "ume/pit.h"

namespace ume {

enum class AsrSelection { kCtc, kCombined };

struct AsrConfig {
  Index d_model = 32;
  Index heads = 2;
  Index ff_dim = 64;
  int encoder_blocks = 2;
  int decoder_blocks = 2;
  int vocab_size = 5;
  double ctc_weight = 0.2;
  AsrSelection selection = AsrSelection::kCtc;
};

void validate(const AsrConfig& config, const std::string& path = "model.asr");

inline constexpr Index kAsrStride = 4;
/// floor((T^enc - 4) / 4) + 1, or 0 when T^enc < 4.
Index asr_frames(Index enc_frames);

class CtcInfeasible : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Minimum frames needed for a target: length plus adjacent repeats.
Index ctc_min_frames(std::span<const int> target);

/// -log sum over alignments. log_probs [T x (V+1)]; the gradient is exact
/// for arbitrary inputs (no normalization is assumed). Throws CtcInfeasible
/// when T < ctc_min_frames(target).
template <typename Scalar>
Tensor<Scalar> ctc_loss(const Tensor<Scalar>& log_probs, std::span<const int> target);

/// Forward-only value in double; +inf when infeasible.
double ctc_loss_value(const Eigen::Ref<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>&
                          log_probs,
                      std::span<const int> target);

/// Per-frame argmax, collapse repeats, drop blanks. scores [T x (V+1)], row-major.
/// `token_scores` receives, per emitted token, its best frame score.
std::vector<int> greedy_decode(const Eigen::Ref<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic,
                                                                   Eigen::RowMajor>>& scores,
                               std::vector<float>* token_scores = nullptr);

template <typename Scalar>
struct DecoderBlock {
  LayerNorm<Scalar> norm1, norm2, norm3;
  SelfAttention<Scalar> self_attn, cross_attn;
  FeedForward<Scalar> ff;
};

template <typename Scalar>
struct SpeakerEncoder {
  Conv1d<Scalar> conv;
  std::vector<TransformerBlock<Scalar>> blocks;
};

template <typename Scalar>
struct AsrPitLoss {
  Tensor<Scalar> loss;  // undefined when skipped
  Permutation perm;
  std::vector<double> ctc;  // per stream, under perm
  std::vector<double> att;
  bool skipped = false;
};

template <typename Scalar>
class AsrHead {
 public:
  AsrHead(ParameterStore<Scalar>& store, const AsrConfig& config, Index d_enc, int speakers, Rng& rng);

  const AsrConfig& config() const { return config_; }
  int speakers() const { return static_cast<int>(encoders_.size()); }
  int sos() const { return config_.vocab_size + 1; }
  int eos() const { return config_.vocab_size + 2; }

  /// C tensors [T^asr x D^asr].
  std::vector<Tensor<Scalar>> speaker_encode(Binding<Scalar>& b, const Tensor<Scalar>& h_enc) const;
  /// log_softmax of the shared CTC projection, [T^asr x (V+1)].
  Tensor<Scalar> ctc_log_probs(Binding<Scalar>& b, const Tensor<Scalar>& hidden) const;
  /// Teacher-forced decoder log-probabilities [(U+1) x (V+1)] for inputs
  /// [sos, target]; class w-1 is token w and class V is eos.
  Tensor<Scalar> decoder_log_probs(Binding<Scalar>& b, const Tensor<Scalar>& hidden,
                                   std::span<const int> target) const;
  /// Mean cross-entropy against [target, eos].
  Tensor<Scalar> attention_loss(Binding<Scalar>& b, const Tensor<Scalar>& hidden, std::span<const int> target) const;

  AsrPitLoss<Scalar> pit_loss(Binding<Scalar>& b, const std::vector<Tensor<Scalar>>& hidden,
                              const std::vector<std::vector<int>>& targets) const;

 private:
  AsrConfig config_;
  std::vector<SpeakerEncoder<Scalar>> encoders_;
  Linear<Scalar> ctc_;
  Parameter<Scalar>* embed_ = nullptr;
  std::vector<DecoderBlock<Scalar>> decoder_;
  LayerNorm<Scalar> out_norm_;
  Linear<Scalar> out_;
};

}  // namespace ume
