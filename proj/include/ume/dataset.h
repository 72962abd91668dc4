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

// Dataset persistence: PCM16 WAV files plus a JSON-lines manifest with one
// object per item:
//   {"id", "sample_rate", "mixture", "sources": [...],
//    "activity": [[[start, end], ...] per speaker],
//    "transcripts": [[token ids] per speaker], "noise_snr_db": number|null}
// Paths are relative to the manifest directory.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ume/mixture_sim.h"

namespace ume {

class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& what, int line = 0) : std::runtime_error(what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

/// Writes {id}_mix.wav and {id}_s{c}.wav for each item and the manifest.
std::filesystem::path write_dataset(const std::vector<MixtureSample>& samples,
                                    const std::filesystem::path& dir);

/// Accepts the manifest path or its directory.
std::vector<MixtureSample> read_dataset(const std::filesystem::path& manifest);

/// Parses and validates one manifest entry without touching audio files.
nlohmann::json parse_manifest_line(const std::string& text, int line_number);

/// Per-speaker spans must lie in [0, length) and must not overlap.
void validate_spans(const std::vector<std::vector<Span>>& spans, Index length, const std::string& where);

}  // namespace ume
