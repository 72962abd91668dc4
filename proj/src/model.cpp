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

#include "ume/model.h"

#include <algorithm>

namespace ume {

void validate(const ModelConfig& c, const std::string& path) {
  if (c.speakers < 1 || c.speakers > 3) throw ConfigError(path + ".speakers", "must be 1, 2 or 3");
  validate(c.encoder, path + ".encoder");
  validate(c.sep, path + ".sep");
  validate(c.asr, path + ".asr");
}

namespace {

template <typename S>
Rng module_rng(std::uint64_t seed, std::uint64_t tag) {
  return Rng(seed, 0x30de1).fork(tag);
}

template <typename S>
Encoder<S> make_encoder(ParameterStore<S>& store, const ModelConfig& c, std::uint64_t seed) {
  validate(c);
  Rng rng = module_rng<S>(seed, 1);
  return Encoder<S>(store, c.encoder, rng);
}

}  // namespace

template <typename S>
Model<S>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      encoder_(make_encoder(store_, config, seed)),
      diar_([&] {
        Rng rng = module_rng<S>(seed, 2);
        return DiarHead<S>(store_, config.encoder.d_model, config.speakers, rng);
      }()),
      sep_([&] {
        Rng rng = module_rng<S>(seed, 3);
        return SepHead<S>(store_, config.sep, config.encoder.d_model, config.speakers, rng);
      }()),
      asr_([&] {
        Rng rng = module_rng<S>(seed, 4);
        return AsrHead<S>(store_, config.asr, config.encoder.d_model, config.speakers, rng);
      }()) {}

bool asr_feasible(Index samples, const std::vector<std::vector<int>>& targets) {
  const Index frames = asr_frames(encoder_frames(samples));
  Eigen::MatrixXd cost(static_cast<Index>(targets.size()), static_cast<Index>(targets.size()));
  for (Index i = 0; i < cost.rows(); ++i)
    for (Index j = 0; j < cost.cols(); ++j)
      cost(i, j) = frames >= std::max<Index>(1, ctc_min_frames(targets[static_cast<std::size_t>(j)]))
                       ? 0.0
                       : std::numeric_limits<double>::infinity();
  return targets.empty() ? false : best_permutation(cost).has_value();
}

bool exclusive_to(const std::string& name, Task task) {
  const std::string head = std::string(task_name(task)) + ".";
  if (name.starts_with(head)) return true;
  return name == std::string("encoder.rwse_logits.") + task_name(task) ||
         name == std::string("encoder.ws_logits.") + task_name(task);
}

template <typename S>
ItemLosses<S> Model<S>::losses(Binding<S>& b, const MixtureSample& item, const std::vector<Task>& tasks) const {
  if (item.speakers() != config_.speakers) {
    throw std::invalid_argument("item " + item.id + " has " + std::to_string(item.speakers()) +
                                " speakers, model expects " + std::to_string(config_.speakers));
  }
  ItemLosses<S> out;
  const Tensor<S> x = Tensor<S>::constant({item.length()}, item.mixture.cast<S>());
  const EncoderOutput<S> enc = encoder_.forward(b, x, tasks);
  for (Task t : tasks) {
    const Tensor<S>& h = enc.fused.at(t);
    switch (t) {
      case Task::kDiar: {
        const auto d = diar_.forward(b, h);
        auto r = pit_bce_loss(d.logits, frame_labels(item.activity, h.dim(0)));
        out.diar = r.loss;
        out.diar_perm = r.perm;
        break;
      }
      case Task::kSep: {
        const auto s = sep_.forward(b, x, h);
        std::vector<Array<S>> refs;
        for (const auto& src : item.sources) refs.push_back(src.cast<S>());
        auto r = si_sdr_pit_loss(s.estimates, refs);
        out.sep = r.loss;
        out.sep_perm = r.perm;
        break;
      }
      case Task::kAsr: {
        if (!asr_feasible(item.length(), item.transcripts)) {
          out.asr_skipped = true;
          break;
        }
        auto r = asr_.pit_loss(b, asr_.speaker_encode(b, h), item.transcripts);
        if (r.skipped) {
          out.asr_skipped = true;
        } else {
          out.asr = r.loss;
          out.asr_perm = r.perm;
        }
        break;
      }
    }
  }
  return out;
}

template <typename S>
Inference Model<S>::infer(const Waveform& mixture) const {
  Binding<S> b;
  const Tensor<S> x = Tensor<S>::constant({mixture.size()}, mixture.cast<S>());
  const EncoderOutput<S> enc = encoder_.forward(b, x, {kAllTasks.begin(), kAllTasks.end()});
  Inference out;
  const auto d = diar_.forward(b, enc.fused.at(Task::kDiar));
  out.probs = d.probs.matrix().template cast<float>().array();
  for (const auto& e : sep_.forward(b, x, enc.fused.at(Task::kSep)).estimates) {
    out.estimates.push_back(e.value().template cast<float>());
  }
  const Tensor<S>& ha = enc.fused.at(Task::kAsr);
  if (asr_frames(ha.dim(0)) > 0) {
    for (const auto& h : asr_.speaker_encode(b, ha)) {
      const Tensor<S> lp = asr_.ctc_log_probs(b, h);
      std::vector<float> scores;
      out.hypotheses.push_back(greedy_decode(lp.matrix().template cast<float>().array(), &scores));
      out.token_scores.push_back(std::move(scores));
    }
  } else {
    out.hypotheses.assign(static_cast<std::size_t>(config_.speakers), {});
    out.token_scores.assign(static_cast<std::size_t>(config_.speakers), {});
  }
  return out;
}

template class Model<float>;
template class Model<double>;

}  // namespace ume
