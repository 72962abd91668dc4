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

// JSON form of every configuration section. Parsers reject unknown keys
// and report errors as ConfigError with the offending JSON path.

#include <vector>

#include "json.hpp"
#include "ume/mixture_sim.h"
#include "ume/model.h"
#include "ume/trainer.h"

namespace ume {

struct EvalConfig {
  std::vector<double> collars = {0.0, 0.25};
  int median_frames = 11;
  std::vector<Task> tasks = {Task::kDiar, Task::kSep, Task::kAsr};
};

void validate(const EvalConfig& config, const std::string& path = "eval");

struct RunConfig {
  DatasetConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
};

nlohmann::json to_json(const DatasetConfig& config);
nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const EvalConfig& config);
nlohmann::json to_json(const RunConfig& config);

DatasetConfig parse_dataset_config(const nlohmann::json& j, const std::string& path = "data");
ModelConfig parse_model_config(const nlohmann::json& j, const std::string& path = "model");
TrainConfig parse_train_config(const nlohmann::json& j, const std::string& path = "train");
EvalConfig parse_eval_config(const nlohmann::json& j, const std::string& path = "eval");

/// Parses and validates a whole run configuration. Missing sections take
/// defaults; model.speakers and model.asr.vocab_size default to the data
/// section's values and must agree with them. train.fusion, when present,
/// sets model.encoder.fusion.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

Task parse_task(const std::string& name);

}  // namespace ume
