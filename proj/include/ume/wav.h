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

#include <Eigen/Core>

#include <filesystem>
#include <stdexcept>

namespace ume {

struct WavData {
  Eigen::ArrayXf samples;  // in [-1, 1)
  int sample_rate = 0;
};

class WavError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// RIFF/WAVE, PCM16, mono. Samples are rounded to the nearest LSB and
/// clipped to the representable range.
void write_wav(const std::filesystem::path& path, const Eigen::ArrayXf& samples, int sample_rate);

WavData read_wav(const std::filesystem::path& path);

}  // namespace ume
