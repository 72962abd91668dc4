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

// Checkpoint file layout: one line of compact JSON
//   {"format_version":1,"params":[{"name","role","shape","offset"}...], ...}
// terminated by '\n', followed by little-endian float32 blobs in header
// order. Offsets are bytes from the start of the blob section.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "ume/param.h"

namespace ume {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointTensor {
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json meta;  // header fields other than format_version/params
  std::map<std::string, CheckpointTensor> values;
  std::map<std::string, CheckpointTensor> adam_m;
  std::map<std::string, CheckpointTensor> adam_v;
  std::map<std::string, long> adam_steps;
};

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& what, std::vector<std::string> names = {})
      : std::runtime_error(what), names_(std::move(names)) {}
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

/// Writes to a temporary sibling and renames it into place.
template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const ParameterStore<Scalar>& store,
                     const nlohmann::json& meta = nlohmann::json::object(),
                     bool with_optimizer = true);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `store` for every parameter whose name
/// starts with one of `prefixes` (all when empty). Missing names and shape
/// mismatches are collected and reported together.
template <typename Scalar>
void apply_checkpoint(ParameterStore<Scalar>& store, const Checkpoint& ckpt,
                      const std::vector<std::string>& prefixes = {}, bool with_optimizer = true);

}  // namespace ume
