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

// Time-domain separation branch: learned analysis conv, concatenation with
// upsampled encoder features, dilated TCN mask estimator, masking and a
// shared transposed-conv decoder. Trained with PIT over negative SI-SDR.

#include <string>
#include <vector>

#include "ume/config_error.h"
#include "ume/nn.h"
#include "ume/pit.h"

namespace ume {

struct SepConfig {
  Index kernel = 16;
  Index stride = 8;
  Index filters = 32;
  Index bottleneck = 48;
  int blocks = 2;
  std::vector<Index> dilations = {1, 2, 4, 8};
  Index tcn_kernel = 3;
  bool concat_encoder = true;  // false: masks see the analysis features only
};

void validate(const SepConfig& config, const std::string& path = "model.sep");

/// floor((T - kernel) / stride) + 1.
Index sep_frames(const SepConfig& config, Index samples);
/// 1 + blocks * sum_d (tcn_kernel - 1) * d.
Index tcn_receptive_field(const SepConfig& config);
/// max(1, round-half-up(sep_frames / enc_frames)).
Index upsample_factor(Index sep_frames, Index enc_frames);

/// Repeats encoder frames by upsample_factor, then truncates or repeats the
/// last frame to reach exactly `frames` rows.
template <typename Scalar>
Tensor<Scalar> upsample_to(const Tensor<Scalar>& h, Index frames);

template <typename Scalar>
struct TcnLayer {
  Conv1d<Scalar> dilated;
  PRelu<Scalar> act;
  Linear<Scalar> pointwise;
};

template <typename Scalar>
struct SepOutput {
  Tensor<Scalar> analysis;              // H^sep [T^sep x filters]
  Tensor<Scalar> features;              // H^concat [T^sep x D^sep]
  std::vector<Tensor<Scalar>> masks;    // C x [T^sep x D^sep]
  std::vector<Tensor<Scalar>> estimates;  // C x [T]
};

template <typename Scalar>
class SepHead {
 public:
  SepHead(ParameterStore<Scalar>& store, const SepConfig& config, Index d_enc, int speakers, Rng& rng);

  const SepConfig& config() const { return config_; }
  Index feature_width() const { return width_; }
  int speakers() const { return speakers_; }

  Tensor<Scalar> conv_encode(Binding<Scalar>& b, const Tensor<Scalar>& waveform) const;
  Tensor<Scalar> concat_upsample(const Tensor<Scalar>& analysis, const Tensor<Scalar>& h_enc) const;
  /// TCN embedding E of H^concat [T^sep x bottleneck].
  Tensor<Scalar> tcn(Binding<Scalar>& b, const Tensor<Scalar>& features) const;
  std::vector<Tensor<Scalar>> separate(Binding<Scalar>& b, const Tensor<Scalar>& features) const;
  std::vector<Tensor<Scalar>> reconstruct(Binding<Scalar>& b, const Tensor<Scalar>& features,
                                          const std::vector<Tensor<Scalar>>& masks, Index samples) const;

  /// h_enc may be undefined when the concatenation is disabled.
  SepOutput<Scalar> forward(Binding<Scalar>& b, const Tensor<Scalar>& waveform, const Tensor<Scalar>& h_enc) const;

 private:
  SepConfig config_;
  int speakers_;
  Index width_;
  Conv1d<Scalar> analysis_;
  LayerNorm<Scalar> norm_;
  Linear<Scalar> bottleneck_;
  std::vector<TcnLayer<Scalar>> layers_;
  PRelu<Scalar> mask_act_;
  Linear<Scalar> mask_proj_;
  Parameter<Scalar>* decoder_ = nullptr;  // [D^sep x 1 x kernel]
};

inline constexpr double kSiSdrEps = 1e-8;

/// 10 log10((|a r|^2 + eps) / (|e - a r|^2 + eps)) on zero-meaned e, r with
/// a = <e, r> / |r|^2. Throws on an all-zero (after centering) reference.
double si_sdr_value(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference, double eps = kSiSdrEps);

/// Differentiable in `estimate` [T]; reference is constant.
template <typename Scalar>
Tensor<Scalar> si_sdr(const Tensor<Scalar>& estimate, const Array<Scalar>& reference, double eps = kSiSdrEps);

/// Pairwise -SI-SDR costs (estimate c, reference r).
template <typename Scalar>
Eigen::MatrixXd si_sdr_pair_costs(const std::vector<Tensor<Scalar>>& estimates,
                                  const std::vector<Array<Scalar>>& references);

template <typename Scalar>
struct SepPitLoss {
  Tensor<Scalar> loss;  // -sum_c SI-SDR under the best permutation
  Permutation perm;
};

template <typename Scalar>
SepPitLoss<Scalar> si_sdr_pit_loss(const std::vector<Tensor<Scalar>>& estimates,
                                   const std::vector<Array<Scalar>>& references);

}  // namespace ume
