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

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ume/checkpoint.h"
#include "ume/model.h"

namespace ume {

struct LossWeights {
  double diar = 0.33;
  double sep = 0.33;
  double asr = 0.34;

  double of(Task task) const;
};

void validate(const LossWeights& weights, const std::string& path = "train.weights");
/// Tasks with a positive weight, in diar, sep, asr order.
std::vector<Task> active_tasks(const LossWeights& weights);

struct TrainConfig {
  long steps = 1000;
  int batch_size = 8;
  double lr = 4e-4;
  long warmup = 500;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
  LossWeights weights;
  std::string init_asr;  // checkpoint path; empty for a flat start
  long checkpoint_every = 0;  // 0 writes only the final checkpoint
  double divergence_factor = 10.0;
  int divergence_window = 100;
  int divergence_min_history = 10;
  int threads = 0;  // 0 reads UME_THREADS, defaulting to 1
};

void validate(const TrainConfig& config, const std::string& path = "train");

/// Per-task batch means plus their weighted combination. Absent entries are
/// tasks that were not evaluated.
struct TaskLossBundle {
  std::optional<double> diar, sep, asr;
  double all = 0;
  std::vector<Permutation> diar_perms, sep_perms, asr_perms;  // per item; empty when skipped
  int asr_items = 0;
  int asr_skipped = 0;
};

/// Weighted sum of the task losses present in `losses`.
double combine(const LossWeights& weights, const TaskLossBundle& losses);

/// Why `loss` counts as divergence given the trailing history, if it does:
/// non-finite, or above factor x the trailing median once enough history
/// has accumulated.
std::optional<std::string> divergence_reason(const std::vector<double>& history, double loss,
                                             const TrainConfig& config);

/// All items in the batch were CTC-infeasible.
class BatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long step, const std::string& what) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// Weighted total loss over a batch. Each item runs at its native length
/// with its own graph. With `backward`, gradients of L_all are accumulated
/// into the parameters in item order; the set of parameters reached is
/// returned through `touched` when given.
template <typename Scalar>
TaskLossBundle total_loss(Model<Scalar>& model, std::span<const MixtureSample* const> batch,
                          const LossWeights& weights, bool backward = false, int threads = 1,
                          std::vector<Parameter<Scalar>*>* touched = nullptr);

int worker_threads(int requested);

struct StepLog {
  long step = 0;
  double lr = 0;
  TaskLossBundle losses;
};

/// Counts items whose chosen permutation is not the identity.
int perm_switches(const std::vector<Permutation>& perms);

std::string loss_csv_header();
std::string loss_csv_row(const StepLog& log);

class Trainer {
 public:
  /// `out` may be empty, in which case nothing is written.
  Trainer(Model<float>& model, const std::vector<MixtureSample>& data, TrainConfig config,
          std::filesystem::path out = {});

  /// Restores parameters, optimizer state and the step counter.
  void resume(const std::filesystem::path& checkpoint);

  /// Indices into the dataset for optimizer step `step` (1-based).
  std::vector<std::size_t> batch_indices(long step) const;

  /// Runs the next optimizer step.
  StepLog step();

  /// Steps until config.steps; writes the loss log and checkpoints.
  std::vector<StepLog> run();

  long next_step() const { return next_step_; }
  const TrainConfig& config() const { return config_; }
  std::filesystem::path checkpoint_path(long step) const;
  void save(const std::filesystem::path& path) const;

 private:
  Model<float>& model_;
  const std::vector<MixtureSample>& data_;
  TrainConfig config_;
  std::filesystem::path out_;
  long next_step_ = 1;
  std::vector<double> history_;
};

/// Runs the trainer with weights (0, 0, 1).
std::vector<StepLog> pretrain_asr(Model<float>& model, const std::vector<MixtureSample>& data,
                                  TrainConfig config, const std::filesystem::path& out);

/// Loads the "encoder." and "asr." parameters of `checkpoint` into `model`
/// with fresh optimizer state.
void load_asr_init(Model<float>& model, const std::filesystem::path& checkpoint);

struct LoadedModel {
  std::unique_ptr<Model<float>> model;
  int sample_rate = 0;  // 0 when the checkpoint does not record it
  long step = 0;
};

/// Rebuilds the model recorded in a trainer checkpoint and loads its values.
LoadedModel load_model(const std::filesystem::path& checkpoint);

inline constexpr const char* kLossLogName = "loss.csv";
inline constexpr const char* kFinalCheckpointName = "final.ckpt";

}  // namespace ume
