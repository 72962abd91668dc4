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

// Diarization head: a linear map from H^enc[diar] to per-frame speaker
// activity logits, trained with permutation-invariant BCE.

#include <string>
#include <vector>

#include "ume/mixture_sim.h"
#include "ume/nn.h"
#include "ume/pit.h"

namespace ume {

template <typename Scalar>
struct DiarOutput {
  Tensor<Scalar> logits;  // [T^enc x C]
  Tensor<Scalar> probs;   // sigmoid(logits)
};

template <typename Scalar>
class DiarHead {
 public:
  DiarHead(ParameterStore<Scalar>& store, Index d_enc, int speakers, Rng& rng);
  DiarOutput<Scalar> forward(Binding<Scalar>& b, const Tensor<Scalar>& h) const;
  int speakers() const { return speakers_; }
  const Linear<Scalar>& linear() const { return linear_; }

 private:
  int speakers_;
  Linear<Scalar> linear_;
};

template <typename Scalar>
struct PitLoss {
  Tensor<Scalar> loss;
  Permutation perm;
};

/// Row-major [T^enc x C] 0/1 labels.
using FrameLabels = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// min over permutations of (1/T^enc) sum_c BCE(Y[:, perm[c]], sigmoid(logits[:, c])).
/// Gradient flows through the selected permutation only.
template <typename Scalar>
PitLoss<Scalar> pit_bce_loss(const Tensor<Scalar>& logits, const FrameLabels& labels);

/// Pairwise mean-BCE cost matrix (estimate c, reference r), in double.
template <typename Scalar>
Eigen::MatrixXd bce_pair_costs(const Tensor<Scalar>& logits, const FrameLabels& labels);

/// Frame f covers samples [floor(f T / T^enc), floor((f+1) T / T^enc)); it is
/// labelled 1 iff more than half of them are active.
FrameLabels frame_labels_from_spans(const std::vector<std::vector<Span>>& spans, Index samples, Index frames);
FrameLabels frame_labels(const std::vector<Waveform>& activity, Index frames);

}  // namespace ume
