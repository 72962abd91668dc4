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

// Synthetic conversation-like mixtures X = sum_c Y^c * S^c + N. Tokens are
// rendered as tones (frequency encodes the token id); timbre and tremolo
// differ per speaker.

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ume/config_error.h"
#include "ume/rng.h"
#include "ume/tensor.h"

namespace ume {

using Waveform = Eigen::ArrayXf;

/// Half-open sample range [start, end).
struct Span {
  Index start = 0;
  Index end = 0;
  bool operator==(const Span&) const = default;
};

struct UtteranceSpec {
  int speaker = 1;          // 1-based
  std::vector<int> tokens;  // ids in [1, vocab]
  double base_gain = 1.0;
  double timbre = 0.0;      // second-harmonic ratio in [0, 0.9]
  double tremolo_rate = 0.0;
  Index onset = 0;
};

struct MixtureSample {
  std::string id;
  int sample_rate = 0;
  Waveform mixture;
  std::vector<Waveform> sources;   // zero-padded to mixture length
  std::vector<Waveform> activity;  // 0/1 per sample
  std::vector<std::vector<int>> transcripts;
  std::optional<double> noise_snr_db;
  Waveform noise;  // empty when absent

  int speakers() const { return static_cast<int>(sources.size()); }
  Index length() const { return mixture.size(); }
};

enum class OverlapMode { kFull, kPartial };
enum class NoiseMode { kMixClean, kMixBoth };

struct DatasetConfig {
  int num_items = 10;
  int speakers = 2;
  int sample_rate = 2000;
  double token_duration = 0.1;
  int tokens_min = 5;
  int tokens_max = 10;
  int vocab_size = 5;
  OverlapMode overlap = OverlapMode::kFull;
  double min_overlap = 0.5;  // seconds, partial mode only
  NoiseMode noise = NoiseMode::kMixClean;
  double snr_min_db = 5;
  double snr_max_db = 15;
  std::uint64_t seed = 0;
};

/// Throws ConfigError naming the offending field (prefixed by `path`).
void validate(const DatasetConfig& config, const std::string& path = "data");

/// Fundamental frequency of a token: 150 + 60 * id Hz.
double token_frequency(int token);

/// Per-token tone units with 5 ms raised-cosine fades, peak-normalized to
/// 0.7 and then scaled by base_gain. A random start phase is drawn from rng.
Waveform synth_utterance(const UtteranceSpec& spec, int sample_rate, double token_duration, Rng& rng);

/// Mixture model: X_t = sum_c Y^c_t S^c_t + N_t, summed in speaker order.
Waveform compose_mixture(const std::vector<Waveform>& sources, const std::vector<Waveform>& activity,
                         const Waveform& noise);

/// Places each utterance (onsets per overlap mode), builds activity, draws
/// noise in mixboth mode and assembles the sample. If the mixture peak
/// exceeds 0.95, sources and noise are scaled down together.
MixtureSample mix(std::vector<UtteranceSpec> utterances, const std::vector<Waveform>& waveforms,
                  const DatasetConfig& config, Rng& rng, std::string id = "mix");

/// Draws random utterance specs for one item.
std::vector<UtteranceSpec> draw_utterances(const DatasetConfig& config, Rng& rng);

/// Item i depends only on (config, seed, i).
MixtureSample generate_item(const DatasetConfig& config, int index);
std::vector<MixtureSample> generate_dataset(const DatasetConfig& config);

/// Maximal runs of ones.
std::vector<Span> activity_spans(const Waveform& activity);
Waveform activity_from_spans(const std::vector<Span>& spans, Index length);

}  // namespace ume
