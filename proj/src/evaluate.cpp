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

#include "ume/evaluate.h"

#include <exception>
#include <thread>

namespace ume {

double encoder_frame_shift(Index samples, int sample_rate) {
  const Index frames = encoder_frames(samples);
  if (frames < 1) throw std::invalid_argument("item shorter than one encoder frame");
  return static_cast<double>(samples) / static_cast<double>(frames) / sample_rate;
}

Inference oracle_inference(const MixtureSample& item) {
  Inference out;
  out.probs = frame_labels(item.activity, encoder_frames(item.length()));
  out.estimates = item.sources;
  out.hypotheses = item.transcripts;
  return out;
}

std::vector<Inference> run_inference(const Model<float>& model, const std::vector<MixtureSample>& items,
                                     int threads) {
  std::vector<Inference> out(items.size());
  std::vector<std::exception_ptr> errors(items.size());
  const auto work = [&](std::size_t i) {
    try {
      out[i] = model.infer(items[i].mixture);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, items.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < items.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < workers; ++k) {
      pool.emplace_back([&, k] {
        for (std::size_t i = k; i < items.size(); i += workers) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

bool wants(const EvalOptions& o, Task t) { return std::find(o.tasks.begin(), o.tasks.end(), t) != o.tasks.end(); }

void score_separation(const MixtureSample& item, const Inference& out, ItemReport& r) {
  const std::size_t c = item.sources.size();
  if (out.estimates.size() != c) throw std::invalid_argument(item.id + ": estimate count differs from speakers");
  std::vector<Eigen::ArrayXd> est, ref;
  for (const auto& e : out.estimates) est.push_back(e.cast<double>());
  for (const auto& s : item.sources) ref.push_back(s.cast<double>());
  const Eigen::ArrayXd mixture = item.mixture.cast<double>();
  Eigen::MatrixXd cost(static_cast<Index>(c), static_cast<Index>(c));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) cost(static_cast<Index>(i), static_cast<Index>(j)) = -si_snr(est[i], ref[j]);
  const auto choice = best_permutation(cost);
  Permutation est_of_ref(c);
  for (std::size_t i = 0; i < c; ++i) est_of_ref[static_cast<std::size_t>(choice->perm[i])] = static_cast<int>(i);
  for (std::size_t j = 0; j < c; ++j) {
    const auto& e = est[static_cast<std::size_t>(est_of_ref[j])];
    const double v = si_snr(e, ref[j]);
    const double d = sdr(e, ref[j]);
    r.si_snr.push_back(v);
    r.si_snri.push_back(v - si_snr(mixture, ref[j]));
    r.sdr.push_back(d);
    r.si_snr_ceiling.push_back(si_snr_at_ceiling(v, e, ref[j]));
    r.sdr_ceiling.push_back(sdr_at_ceiling(d, ref[j]));
  }
}

}  // namespace

ItemReport score_item(const MixtureSample& item, const Inference& out, const EvalOptions& o) {
  ItemReport r;
  r.id = item.id;
  if (wants(o, Task::kDiar)) {
    std::vector<std::vector<Span>> spans;
    for (const auto& a : item.activity) spans.push_back(activity_spans(a));
    DerOptions d;
    d.collar = o.collar;
    d.median_frames = o.median_frames;
    d.threshold = o.threshold;
    d.frame_shift = encoder_frame_shift(item.length(), item.sample_rate);
    r.der = der(out.probs, segments_from_spans(spans, item.sample_rate), d);
  }
  if (wants(o, Task::kSep)) score_separation(item, out, r);
  if (wants(o, Task::kAsr)) {
    r.hypotheses = out.hypotheses;
    r.wer = wer_optimal_perm(out.hypotheses, item.transcripts);
  }
  return r;
}

std::vector<ItemReport> score_all(const std::vector<MixtureSample>& items, const std::vector<Inference>& outputs,
                                  const EvalOptions& options) {
  if (items.size() != outputs.size()) throw std::invalid_argument("score_all: one output per item required");
  std::vector<ItemReport> out;
  for (std::size_t i = 0; i < items.size(); ++i) out.push_back(score_item(items[i], outputs[i], options));
  return out;
}

}  // namespace ume
