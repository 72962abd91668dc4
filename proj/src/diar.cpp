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

#include "ume/diar.h"

#include <cmath>
#include <stdexcept>

namespace ume {

template <typename S>
DiarHead<S>::DiarHead(ParameterStore<S>& store, Index d_enc, int speakers, Rng& rng)
    : speakers_(speakers), linear_(store, "diar.linear", d_enc, speakers, rng) {
  if (speakers < 1 || speakers > kMaxPitSpeakers) throw std::invalid_argument("diar: unsupported speaker count");
}

template <typename S>
DiarOutput<S> DiarHead<S>::forward(Binding<S>& b, const Tensor<S>& h) const {
  DiarOutput<S> out;
  out.logits = linear_(b, h);
  out.probs = sigmoid(out.logits);
  return out;
}

namespace {

void check_labels(const Shape& logits, const FrameLabels& y) {
  if (logits.size() != 2 || y.rows() != logits[0] || y.cols() != logits[1]) {
    throw ShapeError("pit_bce_loss", {logits, {y.rows(), y.cols()}}, "labels must match logits");
  }
  if (y.cols() > kMaxPitSpeakers) throw std::invalid_argument("pit_bce_loss: more than 4 speakers");
  if (((y != 0.0f) && (y != 1.0f)).any()) throw std::invalid_argument("pit_bce_loss: labels must be binary");
}

}  // namespace

template <typename S>
Eigen::MatrixXd bce_pair_costs(const Tensor<S>& logits, const FrameLabels& y) {
  check_labels(logits.shape(), y);
  const Index t = y.rows(), c = y.cols();
  const auto z = logits.matrix();
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(c, c);
  for (Index e = 0; e < c; ++e)
    for (Index r = 0; r < c; ++r) {
      double total = 0;
      for (Index f = 0; f < t; ++f) {
        const double x = z(f, e);
        total += std::max(x, 0.0) - x * y(f, r) + std::log1p(std::exp(-std::abs(x)));
      }
      cost(e, r) = total / static_cast<double>(t);
    }
  return cost;
}

template <typename S>
PitLoss<S> pit_bce_loss(const Tensor<S>& logits, const FrameLabels& y) {
  const Eigen::MatrixXd cost = bce_pair_costs(logits, y);
  const auto choice = best_permutation(cost);
  const Index t = y.rows(), c = y.cols();
  Array<S> target(t * c);
  for (Index f = 0; f < t; ++f)
    for (Index e = 0; e < c; ++e) target(f * c + e) = static_cast<S>(y(f, choice->perm[e]));
  PitLoss<S> out;
  out.loss = scale(bce_with_logits(logits, Tensor<S>::constant(logits.shape(), std::move(target))),
                   S(1) / static_cast<S>(t));
  out.perm = choice->perm;
  return out;
}

FrameLabels frame_labels_from_spans(const std::vector<std::vector<Span>>& spans, Index samples, Index frames) {
  std::vector<Waveform> activity;
  for (const auto& s : spans) activity.push_back(activity_from_spans(s, samples));
  if (activity.empty()) return FrameLabels(frames, 0);
  return frame_labels(activity, frames);
}

FrameLabels frame_labels(const std::vector<Waveform>& activity, Index frames) {
  const Index c = static_cast<Index>(activity.size());
  FrameLabels y = FrameLabels::Zero(frames, c);
  if (c == 0) return y;
  const Index samples = activity[0].size();
  if (frames < 1 || frames > samples) throw std::invalid_argument("frame_labels: bad frame count");
  for (Index f = 0; f < frames; ++f) {
    const Index lo = f * samples / frames, hi = (f + 1) * samples / frames;
    for (Index k = 0; k < c; ++k) {
      if (activity[k].size() != samples) throw std::invalid_argument("frame_labels: activity lengths differ");
      const float active = activity[k].segment(lo, hi - lo).sum();
      y(f, k) = 2 * active > static_cast<float>(hi - lo) ? 1.0f : 0.0f;
    }
  }
  return y;
}

#define UME_INSTANTIATE(S)                                                               \
  template class DiarHead<S>;                                                            \
  template PitLoss<S> pit_bce_loss<S>(const Tensor<S>&, const FrameLabels&);             \
  template Eigen::MatrixXd bce_pair_costs<S>(const Tensor<S>&, const FrameLabels&);

UME_INSTANTIATE(float)
UME_INSTANTIATE(double)

}  // namespace ume
