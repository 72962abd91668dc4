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

#include "ume/mixture_sim.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace ume {

namespace {

constexpr double kPeak = 0.7;
constexpr double kMixturePeak = 0.95;
constexpr double kFadeSeconds = 0.005;
constexpr int kMaxOnsetAttempts = 100;

Index unit_length(int sample_rate, double token_duration) {
  return static_cast<Index>(std::llround(token_duration * sample_rate));
}

}  // namespace

double token_frequency(int token) { return 150.0 + 60.0 * token; }

void validate(const DatasetConfig& c, const std::string& path) {
  if (c.num_items < 1) throw ConfigError(path + ".num_items", "must be >= 1");
  if (c.speakers != 2 && c.speakers != 3) throw ConfigError(path + ".speakers", "must be 2 or 3");
  if (c.sample_rate <= 0) throw ConfigError(path + ".sample_rate", "must be positive");
  if (c.token_duration <= 0) throw ConfigError(path + ".token_duration", "must be positive");
  if (unit_length(c.sample_rate, c.token_duration) < 4) {
    throw ConfigError(path + ".token_duration", "token unit shorter than 4 samples");
  }
  if (c.tokens_min < 1 || c.tokens_max < c.tokens_min) {
    throw ConfigError(path + ".tokens_min", "need 1 <= tokens_min <= tokens_max");
  }
  if (c.vocab_size < 1) throw ConfigError(path + ".vocab_size", "must be >= 1");
  if (2.0 * token_frequency(c.vocab_size) >= c.sample_rate / 2.0) {
    throw ConfigError(path + ".vocab_size", "second harmonic of token " + std::to_string(c.vocab_size) +
                                                " is above the Nyquist frequency");
  }
  if (c.overlap == OverlapMode::kPartial) {
    const double shortest = c.tokens_min * c.token_duration;
    if (c.min_overlap <= 0 || c.min_overlap > shortest + 1e-9) {
      throw ConfigError(path + ".overlap.min_overlap", "must be in (0, shortest utterance duration]");
    }
  }
  if (c.noise == NoiseMode::kMixBoth && c.snr_max_db < c.snr_min_db) {
    throw ConfigError(path + ".noise.snr_db", "range is empty");
  }
}

Waveform synth_utterance(const UtteranceSpec& spec, int sample_rate, double token_duration, Rng& rng) {
  if (spec.tokens.empty()) throw std::invalid_argument("synth_utterance: empty token list");
  if (spec.timbre < 0 || spec.timbre > 0.9) throw std::invalid_argument("synth_utterance: timbre outside [0, 0.9]");
  const double nyquist = sample_rate / 2.0;
  for (int tok : spec.tokens) {
    if (tok < 1) throw std::invalid_argument("synth_utterance: token ids start at 1");
    if (token_frequency(tok) >= nyquist || 2.0 * token_frequency(tok) >= nyquist) {
      throw ConfigError("token", "token " + std::to_string(tok) + " or its second harmonic is above Nyquist");
    }
  }
  const Index unit = unit_length(sample_rate, token_duration);
  const Index fade = std::min<Index>(unit / 2, static_cast<Index>(std::llround(kFadeSeconds * sample_rate)));
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double two_pi = 2.0 * std::numbers::pi;

  Eigen::ArrayXd wave(unit * static_cast<Index>(spec.tokens.size()));
  for (std::size_t k = 0; k < spec.tokens.size(); ++k) {
    const double f = token_frequency(spec.tokens[k]);
    for (Index j = 0; j < unit; ++j) {
      const Index i = static_cast<Index>(k) * unit + j;
      const double t = static_cast<double>(i) / sample_rate;
      double v = std::sin(two_pi * f * t + phase) * (1.0 + 0.3 * std::sin(two_pi * spec.tremolo_rate * t)) +
                 spec.timbre * std::sin(2.0 * (two_pi * f * t + phase));
      double w = 1.0;
      if (j < fade) w = 0.5 * (1.0 - std::cos(std::numbers::pi * (j + 0.5) / fade));
      if (unit - 1 - j < fade) w = 0.5 * (1.0 - std::cos(std::numbers::pi * (unit - 1 - j + 0.5) / fade));
      wave(i) = v * w;
    }
  }
  const double peak = wave.abs().maxCoeff();
  if (peak > 0) wave *= kPeak / peak;
  wave *= spec.base_gain;
  return wave.cast<float>();
}

Waveform compose_mixture(const std::vector<Waveform>& sources, const std::vector<Waveform>& activity,
                         const Waveform& noise) {
  if (sources.size() != activity.size() || sources.empty()) {
    throw std::invalid_argument("compose_mixture: need one activity track per source");
  }
  const Index n = sources[0].size();
  Waveform x = Waveform::Zero(n);
  for (std::size_t c = 0; c < sources.size(); ++c) {
    if (sources[c].size() != n || activity[c].size() != n) {
      throw std::invalid_argument("compose_mixture: tracks must share one length");
    }
    x += activity[c] * sources[c];
  }
  if (noise.size() > 0) {
    if (noise.size() != n) throw std::invalid_argument("compose_mixture: noise length differs");
    x += noise;
  }
  return x;
}

std::vector<UtteranceSpec> draw_utterances(const DatasetConfig& c, Rng& rng) {
  std::vector<UtteranceSpec> out;
  for (int s = 1; s <= c.speakers; ++s) {
    UtteranceSpec u;
    u.speaker = s;
    const auto n = rng.uniform_int(c.tokens_min, c.tokens_max);
    for (std::int64_t i = 0; i < n; ++i) u.tokens.push_back(static_cast<int>(rng.uniform_int(1, c.vocab_size)));
    u.base_gain = rng.uniform(0.6, 1.0);
    u.timbre = rng.uniform(0.0, 0.9);
    u.tremolo_rate = rng.uniform(2.0, 8.0);
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

bool overlaps_satisfied(const std::vector<Index>& onsets, const std::vector<Index>& lengths, Index need) {
  for (std::size_t i = 0; i < onsets.size(); ++i)
    for (std::size_t j = i + 1; j < onsets.size(); ++j) {
      const Index lo = std::max(onsets[i], onsets[j]);
      const Index hi = std::min(onsets[i] + lengths[i], onsets[j] + lengths[j]);
      if (hi - lo < need) return false;
    }
  return true;
}

}  // namespace

MixtureSample mix(std::vector<UtteranceSpec> utterances, const std::vector<Waveform>& waveforms,
                  const DatasetConfig& config, Rng& rng, std::string id) {
  if (utterances.size() != waveforms.size() || utterances.empty()) {
    throw std::invalid_argument("mix: need one waveform per utterance");
  }
  const std::size_t count = utterances.size();
  std::vector<Index> lengths;
  for (const auto& w : waveforms) lengths.push_back(w.size());
  std::vector<Index> onsets(count, 0);
  if (config.overlap == OverlapMode::kPartial) {
    const Index need = static_cast<Index>(std::ceil(config.min_overlap * config.sample_rate));
    const Index shortest = *std::min_element(lengths.begin(), lengths.end());
    bool ok = false;
    for (int attempt = 0; attempt < kMaxOnsetAttempts && !ok; ++attempt) {
      const Index range = std::max<Index>(0, shortest - need);
      for (auto& o : onsets) o = rng.uniform_int(0, range);
      const Index first = *std::min_element(onsets.begin(), onsets.end());
      for (auto& o : onsets) o -= first;
      ok = overlaps_satisfied(onsets, lengths, need);
    }
    if (!ok) throw std::runtime_error("mix: could not satisfy the minimum overlap after 100 attempts");
  }
  Index total = 0;
  for (std::size_t c = 0; c < count; ++c) total = std::max(total, onsets[c] + lengths[c]);

  MixtureSample s;
  s.id = std::move(id);
  s.sample_rate = config.sample_rate;
  for (std::size_t c = 0; c < count; ++c) {
    utterances[c].onset = onsets[c];
    Waveform src = Waveform::Zero(total), act = Waveform::Zero(total);
    src.segment(onsets[c], lengths[c]) = waveforms[c];
    act.segment(onsets[c], lengths[c]).setOnes();
    s.sources.push_back(std::move(src));
    s.activity.push_back(std::move(act));
    s.transcripts.push_back(utterances[c].tokens);
  }

  Waveform clean = compose_mixture(s.sources, s.activity, Waveform());
  if (config.noise == NoiseMode::kMixBoth) {
    const double snr = rng.uniform(config.snr_min_db, config.snr_max_db);
    Eigen::ArrayXd noise(total);
    for (Index i = 0; i < total; ++i) noise(i) = rng.normal();
    double sig = 0, pow = 0;
    for (Index i = 0; i < total; ++i) {
      bool any = false;
      for (const auto& a : s.activity) any = any || a(i) > 0;
      if (!any) continue;
      sig += static_cast<double>(clean(i)) * clean(i);
      pow += noise(i) * noise(i);
    }
    noise *= std::sqrt(sig / (pow * std::pow(10.0, snr / 10.0)));
    s.noise = noise.cast<float>();
    s.noise_snr_db = snr;
  }
  const Waveform rough = s.noise.size() ? Waveform(clean + s.noise) : clean;
  const float peak = rough.abs().maxCoeff();
  if (peak > kMixturePeak) {
    const float g = static_cast<float>(kMixturePeak) / peak;
    for (auto& src : s.sources) src *= g;
    if (s.noise.size()) s.noise *= g;
  }
  s.mixture = compose_mixture(s.sources, s.activity, s.noise);
  return s;
}

MixtureSample generate_item(const DatasetConfig& config, int index) {
  Rng rng = Rng(config.seed, 0x5eed).fork(static_cast<std::uint64_t>(index));
  auto specs = draw_utterances(config, rng);
  std::vector<Waveform> waves;
  for (const auto& u : specs) waves.push_back(synth_utterance(u, config.sample_rate, config.token_duration, rng));
  char id[32];
  std::snprintf(id, sizeof id, "mix%05d", index);
  return mix(std::move(specs), waves, config, rng, id);
}

std::vector<MixtureSample> generate_dataset(const DatasetConfig& config) {
  validate(config);
  std::vector<MixtureSample> out;
  out.reserve(static_cast<std::size_t>(config.num_items));
  for (int i = 0; i < config.num_items; ++i) out.push_back(generate_item(config, i));
  return out;
}

std::vector<Span> activity_spans(const Waveform& activity) {
  std::vector<Span> spans;
  Index i = 0;
  const Index n = activity.size();
  while (i < n) {
    if (activity(i) > 0.5f) {
      Index j = i;
      while (j < n && activity(j) > 0.5f) ++j;
      spans.push_back({i, j});
      i = j;
    } else {
      ++i;
    }
  }
  return spans;
}

Waveform activity_from_spans(const std::vector<Span>& spans, Index length) {
  Waveform y = Waveform::Zero(length);
  for (const auto& s : spans) {
    if (s.start < 0 || s.end > length || s.start >= s.end) {
      throw std::out_of_range("activity span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                              ") outside [0," + std::to_string(length) + ")");
    }
    y.segment(s.start, s.end - s.start).setOnes();
  }
  return y;
}

}  // namespace ume
