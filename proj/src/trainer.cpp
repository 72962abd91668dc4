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

#include "ume/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "ume/config.h"
#include "ume/optim.h"

namespace ume {

double LossWeights::of(Task task) const {
  switch (task) {
    case Task::kDiar: return diar;
    case Task::kSep: return sep;
    case Task::kAsr: return asr;
  }
  return 0;
}

void validate(const LossWeights& w, const std::string& path) {
  for (Task t : kAllTasks) {
    const double v = w.of(t);
    if (!std::isfinite(v) || v < 0) throw ConfigError(path + "." + task_name(t), "must be a finite value >= 0");
  }
  if (active_tasks(w).empty()) throw ConfigError(path, "at least one weight must be positive");
}

std::vector<Task> active_tasks(const LossWeights& w) {
  std::vector<Task> out;
  for (Task t : kAllTasks)
    if (w.of(t) > 0) out.push_back(t);
  return out;
}

void validate(const TrainConfig& c, const std::string& path) {
  if (c.steps < 1) throw ConfigError(path + ".steps", "must be >= 1");
  if (c.batch_size < 1) throw ConfigError(path + ".batch_size", "must be >= 1");
  if (!(c.lr >= 0) || !std::isfinite(c.lr)) throw ConfigError(path + ".lr", "must be a finite value >= 0");
  if (c.warmup < 0) throw ConfigError(path + ".warmup", "must be >= 0");
  if (c.warmup > c.steps) throw ConfigError(path + ".warmup", "must not exceed train.steps");
  if (!(c.weight_decay >= 0)) throw ConfigError(path + ".weight_decay", "must be >= 0");
  if (c.checkpoint_every < 0) throw ConfigError(path + ".checkpoint_every", "must be >= 0");
  if (!(c.divergence_factor > 1)) throw ConfigError(path + ".divergence.factor", "must be > 1");
  if (c.divergence_window < 1) throw ConfigError(path + ".divergence.window", "must be >= 1");
  if (c.divergence_min_history < 1) throw ConfigError(path + ".divergence.min_history", "must be >= 1");
  if (c.threads < 0) throw ConfigError(path + ".threads", "must be >= 0");
  validate(c.weights, path + ".weights");
}

int worker_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("UME_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

template <typename S>
TaskLossBundle total_loss(Model<S>& model, std::span<const MixtureSample* const> batch, const LossWeights& weights,
                          bool backward, int threads, std::vector<Parameter<S>*>* touched) {
  validate(weights, "weights");
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  const std::vector<Task> tasks = active_tasks(weights);
  const std::size_t n = batch.size();

  std::vector<char> feasible(n, 0);
  int n_asr = 0;
  if (weights.asr > 0) {
    for (std::size_t i = 0; i < n; ++i) {
      feasible[i] = asr_feasible(batch[i]->length(), batch[i]->transcripts);
      n_asr += feasible[i];
    }
    if (n_asr == 0) throw BatchError("every item in the batch is too short for its transcripts (CTC infeasible)");
  }
  const auto count = [&](Task t) { return t == Task::kAsr ? n_asr : static_cast<int>(n); };

  struct Slot {
    Binding<S> binding;
    ItemLosses<S> losses;
    std::exception_ptr error;
  };
  std::vector<Slot> slots(n);
  const auto work = [&](std::size_t i) {
    Slot& slot = slots[i];
    try {
      std::vector<Task> item_tasks;
      for (Task t : tasks)
        if (t != Task::kAsr || feasible[i]) item_tasks.push_back(t);
      slot.losses = model.losses(slot.binding, *batch[i], item_tasks);
      if (feasible[i] && weights.asr > 0 && !slot.losses.asr) {
        throw std::logic_error("ASR loss skipped for an item counted as feasible: " + batch[i]->id);
      }
      if (!backward) return;
      Tensor<S> item_total;
      for (Task t : tasks) {
        const auto& loss = t == Task::kDiar ? slot.losses.diar : t == Task::kSep ? slot.losses.sep : slot.losses.asr;
        if (!loss) continue;
        const Tensor<S> term = scale(*loss, static_cast<S>(weights.of(t) / count(t)));
        item_total = item_total.defined() ? add(item_total, term) : term;
      }
      if (item_total.defined()) ume::backward(item_total);
    } catch (...) {
      slot.error = std::current_exception();
    }
  };
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k) {
      pool.emplace_back([&, k] {
        for (std::size_t i = static_cast<std::size_t>(k); i < n; i += static_cast<std::size_t>(workers)) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& slot : slots)
    if (slot.error) std::rethrow_exception(slot.error);

  TaskLossBundle out;
  out.asr_items = n_asr;
  double sums[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const ItemLosses<S>& l = slots[i].losses;
    if (l.diar) {
      sums[0] += static_cast<double>(l.diar->item());
      out.diar_perms.push_back(l.diar_perm);
    }
    if (l.sep) {
      sums[1] += static_cast<double>(l.sep->item());
      out.sep_perms.push_back(l.sep_perm);
    }
    if (l.asr) {
      sums[2] += static_cast<double>(l.asr->item());
      out.asr_perms.push_back(l.asr_perm);
    } else if (weights.asr > 0) {
      ++out.asr_skipped;
    }
  }
  for (Task t : tasks) {
    const double mean = sums[static_cast<int>(t)] / count(t);
    (t == Task::kDiar ? out.diar : t == Task::kSep ? out.sep : out.asr) = mean;
  }
  out.all = combine(weights, out);

  if (backward) {
    std::vector<Parameter<S>*> reached;
    for (auto& slot : slots) {
      slot.binding.flush();
      for (Parameter<S>* p : slot.binding.touched())
        if (std::find(reached.begin(), reached.end(), p) == reached.end()) reached.push_back(p);
    }
    if (touched) *touched = std::move(reached);
  }
  return out;
}

template TaskLossBundle total_loss(Model<float>&, std::span<const MixtureSample* const>, const LossWeights&, bool,
                                   int, std::vector<Parameter<float>*>*);
template TaskLossBundle total_loss(Model<double>&, std::span<const MixtureSample* const>, const LossWeights&, bool,
                                   int, std::vector<Parameter<double>*>*);

double combine(const LossWeights& w, const TaskLossBundle& l) {
  double total = 0;
  if (l.diar) total += w.diar * *l.diar;
  if (l.sep) total += w.sep * *l.sep;
  if (l.asr) total += w.asr * *l.asr;
  return total;
}

int perm_switches(const std::vector<Permutation>& perms) {
  return static_cast<int>(std::count_if(perms.begin(), perms.end(), [](const Permutation& p) { return !is_identity(p); }));
}

namespace {

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string optional_number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

}  // namespace

std::string loss_csv_header() {
  return "step,lr,L_all,L_diar,L_sep,L_asr,switch_diar,switch_sep,switch_asr,asr_skipped";
}

std::string loss_csv_row(const StepLog& log) {
  const TaskLossBundle& l = log.losses;
  std::ostringstream row;
  row << log.step << ',' << number(log.lr) << ',' << number(l.all) << ',' << optional_number(l.diar) << ','
      << optional_number(l.sep) << ',' << optional_number(l.asr) << ',' << perm_switches(l.diar_perms) << ','
      << perm_switches(l.sep_perms) << ',' << perm_switches(l.asr_perms) << ',' << l.asr_skipped;
  return row.str();
}

std::optional<std::string> divergence_reason(const std::vector<double>& history, double loss,
                                             const TrainConfig& config) {
  if (!std::isfinite(loss)) return "L_all is " + number(loss);
  const std::size_t n = std::min(history.size(), static_cast<std::size_t>(config.divergence_window));
  if (static_cast<int>(n) < config.divergence_min_history) return std::nullopt;
  std::vector<double> h(history.end() - static_cast<long>(n), history.end());
  std::sort(h.begin(), h.end());
  const double median = n % 2 ? h[n / 2] : 0.5 * (h[n / 2 - 1] + h[n / 2]);
  double spread = 0;
  for (double v : h) spread += std::abs(v - median);
  spread /= static_cast<double>(n);
  // Growth is measured against the larger of |median| and the mean absolute
  // deviation, so a loss hovering around zero is not flagged by noise alone.
  const double scale = std::max(std::abs(median), spread);
  if (scale > 0 && loss > median + (config.divergence_factor - 1) * scale) {
    return "L_all " + number(loss) + " grew more than " + number(config.divergence_factor) +
           "x over the trailing median " + number(median) + " (scale " + number(scale) + ")";
  }
  return std::nullopt;
}

Trainer::Trainer(Model<float>& model, const std::vector<MixtureSample>& data, TrainConfig config,
                 std::filesystem::path out)
    : model_(model), data_(data), config_(std::move(config)), out_(std::move(out)) {
  validate(config_);
  if (data_.empty()) throw std::invalid_argument("train: dataset is empty");
  for (const auto& item : data_) {
    if (item.speakers() != model_.config().speakers) {
      throw std::invalid_argument("train: item " + item.id + " has " + std::to_string(item.speakers()) +
                                  " speakers, model expects " + std::to_string(model_.config().speakers));
    }
  }
  if (!config_.init_asr.empty()) load_asr_init(model_, config_.init_asr);
}

std::vector<std::size_t> Trainer::batch_indices(long step) const {
  if (step < 1) throw std::invalid_argument("batch_indices: steps start at 1");
  const std::size_t n = data_.size();
  std::vector<std::size_t> out;
  long cached_epoch = -1;
  std::vector<std::size_t> order(n);
  for (int k = 0; k < config_.batch_size; ++k) {
    const std::uint64_t position = static_cast<std::uint64_t>(step - 1) * config_.batch_size + k;
    const long epoch = static_cast<long>(position / n);
    if (epoch != cached_epoch) {
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      Rng rng = Rng(config_.seed, 0xba7c4).fork(static_cast<std::uint64_t>(epoch));
      for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      cached_epoch = epoch;
    }
    out.push_back(order[position % n]);
  }
  return out;
}

StepLog Trainer::step() {
  const long s = next_step_;
  std::vector<const MixtureSample*> batch;
  for (std::size_t i : batch_indices(s)) batch.push_back(&data_[i]);

  model_.store().zero_grad();
  std::vector<Parameter<float>*> touched;
  StepLog log;
  log.step = s;
  try {
    log.losses = total_loss(model_, std::span<const MixtureSample* const>(batch), config_.weights, true,
                            worker_threads(config_.threads), &touched);
  } catch (const NonFiniteCostError& e) {
    throw DivergenceError(s, "training diverged at step " + std::to_string(s) + ": " + e.what());
  }
  if (auto reason = divergence_reason(history_, log.losses.all, config_)) {
    throw DivergenceError(s, "training diverged at step " + std::to_string(s) + ": " + *reason);
  }

  log.lr = lr_schedule(s, config_.lr, config_.warmup);
  AdamWOptions opt;
  opt.lr = log.lr;
  opt.weight_decay = config_.weight_decay;
  adamw_step(std::span<Parameter<float>* const>(touched), opt);

  history_.push_back(log.losses.all);
  if (static_cast<int>(history_.size()) > config_.divergence_window) history_.erase(history_.begin());
  ++next_step_;
  return log;
}

std::filesystem::path Trainer::checkpoint_path(long step) const {
  char name[32];
  std::snprintf(name, sizeof name, "step_%06ld.ckpt", step);
  return out_ / name;
}

void Trainer::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {{"step", next_step_ - 1},
                         {"model", to_json(model_.config())},
                         {"train", to_json(config_)},
                         {"sample_rate", data_.front().sample_rate},
                         {"divergence_history", history_}};
  save_checkpoint(path, model_.store(), meta, true);
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!ckpt.meta.contains("step")) throw CheckpointError(checkpoint.string() + ": no step recorded");
  if (ckpt.meta.contains("model") && ckpt.meta["model"] != to_json(model_.config())) {
    throw CheckpointError(checkpoint.string() + ": model configuration differs from the checkpoint");
  }
  apply_checkpoint(model_.store(), ckpt, {}, true);
  next_step_ = ckpt.meta["step"].get<long>() + 1;
  history_.clear();
  if (ckpt.meta.contains("divergence_history")) history_ = ckpt.meta["divergence_history"].get<std::vector<double>>();
}

std::vector<StepLog> Trainer::run() {
  std::ofstream csv;
  if (!out_.empty()) {
    std::filesystem::create_directories(out_);
    const auto path = out_ / kLossLogName;
    std::vector<std::string> kept;
    if (next_step_ > 1 && std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (!line.empty() && std::stol(line.substr(0, line.find(','))) < next_step_) kept.push_back(line);
      }
    }
    csv.open(path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + path.string());
    csv << loss_csv_header() << '\n';
    for (const auto& line : kept) csv << line << '\n';
  }
  std::vector<StepLog> logs;
  while (next_step_ <= config_.steps) {
    StepLog log = step();
    if (csv.is_open()) csv << loss_csv_row(log) << '\n' << std::flush;
    if (!out_.empty() && config_.checkpoint_every > 0 && log.step % config_.checkpoint_every == 0) {
      save(checkpoint_path(log.step));
    }
    logs.push_back(std::move(log));
  }
  if (!out_.empty()) save(out_ / kFinalCheckpointName);
  return logs;
}

std::vector<StepLog> pretrain_asr(Model<float>& model, const std::vector<MixtureSample>& data, TrainConfig config,
                                  const std::filesystem::path& out) {
  config.weights = {0.0, 0.0, 1.0};
  config.init_asr.clear();
  Trainer trainer(model, data, std::move(config), out);
  return trainer.run();
}

void load_asr_init(Model<float>& model, const std::filesystem::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  apply_checkpoint(model.store(), ckpt, {"encoder.", "asr."}, false);
}

LoadedModel load_model(const std::filesystem::path& checkpoint) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (!ckpt.meta.contains("model")) throw CheckpointError(checkpoint.string() + ": no model configuration recorded");
  LoadedModel out;
  out.model = std::make_unique<Model<float>>(parse_model_config(ckpt.meta["model"], "checkpoint.model"), 0);
  apply_checkpoint(out.model->store(), ckpt, {}, false);
  out.sample_rate = ckpt.meta.value("sample_rate", 0);
  out.step = ckpt.meta.value("step", 0L);
  return out;
}

}  // namespace ume
