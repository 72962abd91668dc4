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

#include <vector>

#include "ume/metrics.h"
#include "ume/model.h"

namespace ume {

struct EvalOptions {
  double collar = 0.0;
  int median_frames = 11;
  double threshold = 0.5;
  std::vector<Task> tasks = {Task::kDiar, Task::kSep, Task::kAsr};
};

/// Seconds per encoder frame for an item of `samples` samples, so that
/// scoring frames coincide with the training labels.
double encoder_frame_shift(Index samples, int sample_rate);

/// Ground-truth activities, sources and transcripts in inference form.
Inference oracle_inference(const MixtureSample& item);

/// Runs the model over every item, `threads` items at a time.
std::vector<Inference> run_inference(const Model<float>& model, const std::vector<MixtureSample>& items,
                                     int threads = 1);

ItemReport score_item(const MixtureSample& item, const Inference& out, const EvalOptions& options);

std::vector<ItemReport> score_all(const std::vector<MixtureSample>& items, const std::vector<Inference>& outputs,
                                  const EvalOptions& options);

}  // namespace ume
