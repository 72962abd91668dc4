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

#include "ume/dataset.h"

#include <algorithm>
#include <fstream>

#include "ume/wav.h"

namespace ume {

namespace fs = std::filesystem;

namespace {

std::string source_name(const std::string& id, int c) { return id + "_s" + std::to_string(c) + ".wav"; }

}  // namespace

void validate_spans(const std::vector<std::vector<Span>>& spans, Index length, const std::string& where) {
  for (std::size_t c = 0; c < spans.size(); ++c) {
    std::vector<Span> sorted = spans[c];
    std::sort(sorted.begin(), sorted.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const Span& s = sorted[i];
      if (s.start < 0 || s.end > length || s.start >= s.end) {
        throw ManifestError(where + ": speaker " + std::to_string(c + 1) + " span [" + std::to_string(s.start) +
                            "," + std::to_string(s.end) + ") outside [0," + std::to_string(length) + ")");
      }
      if (i > 0 && s.start < sorted[i - 1].end) {
        throw ManifestError(where + ": speaker " + std::to_string(c + 1) + " has overlapping spans");
      }
    }
  }
}

fs::path write_dataset(const std::vector<MixtureSample>& samples, const fs::path& dir) {
  fs::create_directories(dir);
  std::string manifest;
  for (const auto& s : samples) {
    nlohmann::json j;
    j["id"] = s.id;
    j["sample_rate"] = s.sample_rate;
    j["mixture"] = s.id + "_mix.wav";
    write_wav(dir / (s.id + "_mix.wav"), s.mixture, s.sample_rate);
    nlohmann::json sources = nlohmann::json::array(), activity = nlohmann::json::array();
    for (int c = 0; c < s.speakers(); ++c) {
      const std::string name = source_name(s.id, c + 1);
      write_wav(dir / name, s.sources[static_cast<std::size_t>(c)], s.sample_rate);
      sources.push_back(name);
      nlohmann::json spans = nlohmann::json::array();
      for (const Span& sp : activity_spans(s.activity[static_cast<std::size_t>(c)])) spans.push_back({sp.start, sp.end});
      activity.push_back(std::move(spans));
    }
    j["sources"] = std::move(sources);
    j["activity"] = std::move(activity);
    j["transcripts"] = s.transcripts;
    j["noise_snr_db"] = s.noise_snr_db ? nlohmann::json(*s.noise_snr_db) : nlohmann::json(nullptr);
    manifest += j.dump() + "\n";
  }
  const fs::path path = dir / kManifestName;
  const fs::path tmp = dir / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ManifestError("cannot write manifest '" + path.string() + "'");
    out << manifest;
  }
  fs::rename(tmp, path);
  return path;
}

nlohmann::json parse_manifest_line(const std::string& text, int line_number) {
  const std::string where = "manifest line " + std::to_string(line_number);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(where + ": malformed JSON (" + e.what() + ")", line_number);
  }
  for (const char* key : {"id", "sample_rate", "mixture", "sources", "activity", "transcripts"}) {
    if (!j.contains(key)) throw ManifestError(where + ": missing field '" + key + "'", line_number);
  }
  if (j["sources"].size() != j["activity"].size() || j["sources"].size() != j["transcripts"].size()) {
    throw ManifestError(where + ": sources, activity and transcripts disagree on speaker count", line_number);
  }
  return j;
}

std::vector<MixtureSample> read_dataset(const fs::path& manifest_arg) {
  const fs::path manifest = fs::is_directory(manifest_arg) ? manifest_arg / kManifestName : manifest_arg;
  std::ifstream in(manifest);
  if (!in) throw ManifestError("cannot open manifest '" + manifest.string() + "'");
  const fs::path dir = manifest.parent_path();
  std::vector<MixtureSample> out;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const nlohmann::json j = parse_manifest_line(text, line);
    const std::string where = "manifest line " + std::to_string(line);
    MixtureSample s;
    try {
      s.id = j["id"].get<std::string>();
      s.sample_rate = j["sample_rate"].get<int>();
      const WavData mix = read_wav(dir / j["mixture"].get<std::string>());
      if (mix.sample_rate != s.sample_rate) throw ManifestError(where + ": mixture sample rate differs", line);
      s.mixture = mix.samples;
      std::vector<std::vector<Span>> spans;
      for (const auto& a : j["activity"]) {
        std::vector<Span> sp;
        for (const auto& pair : a) sp.push_back({pair.at(0).get<Index>(), pair.at(1).get<Index>()});
        spans.push_back(std::move(sp));
      }
      validate_spans(spans, s.length(), where);
      for (std::size_t c = 0; c < spans.size(); ++c) {
        const WavData src = read_wav(dir / j["sources"][c].get<std::string>());
        if (src.samples.size() != s.length()) throw ManifestError(where + ": source length differs", line);
        s.sources.push_back(src.samples);
        s.activity.push_back(activity_from_spans(spans[c], s.length()));
      }
      s.transcripts = j["transcripts"].get<std::vector<std::vector<int>>>();
      if (!j.value("noise_snr_db", nlohmann::json()).is_null()) {
        s.noise_snr_db = j["noise_snr_db"].get<double>();
        s.noise = s.mixture - compose_mixture(s.sources, s.activity, Waveform());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ManifestError(where + ": " + e.what(), line);
    } catch (const WavError& e) {
      throw ManifestError(where + ": " + e.what(), line);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ume
