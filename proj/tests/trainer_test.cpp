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

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ume/config.h"
#include "ume/optim.h"
#include "ume/trainer.h"

using namespace ume;

namespace {

DatasetConfig tiny_data(int items, std::uint64_t seed = 3) {
  DatasetConfig d;
  d.num_items = items;
  d.tokens_min = 5;
  d.tokens_max = 6;
  d.seed = seed;
  return d;
}

ModelConfig tiny_model(Fusion fusion = Fusion::kRwse) {
  ModelConfig m;
  m.encoder.layers = 2;
  m.encoder.d_model = 8;
  m.encoder.ff_dim = 16;
  m.encoder.fusion = fusion;
  m.sep.filters = 8;
  m.sep.bottleneck = 8;
  m.sep.blocks = 1;
  m.sep.dilations = {1, 2};
  m.asr.d_model = 8;
  m.asr.ff_dim = 16;
  m.asr.encoder_blocks = 1;
  m.asr.decoder_blocks = 1;
  return m;
}

TrainConfig tiny_train(long steps, int batch = 2) {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = batch;
  t.lr = 2e-3;
  t.warmup = 0;
  return t;
}

std::vector<const MixtureSample*> pointers(const std::vector<MixtureSample>& data) {
  std::vector<const MixtureSample*> out;
  for (const auto& d : data) out.push_back(&d);
  return out;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ume_trainer_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename S>
std::map<std::string, Array<S>> snapshot(const ParameterStore<S>& store) {
  std::map<std::string, Array<S>> out;
  for (const auto* p : store.all()) out[p->name] = p->value;
  return out;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("lr schedule shape") {
    CHECK(lr_schedule(250, 4e-4, 500) == doctest::Approx(2e-4));
    CHECK(lr_schedule(500, 4e-4, 500) == doctest::Approx(4e-4));
    CHECK(lr_schedule(2000, 4e-4, 500) == doctest::Approx(2e-4));
  }

  TEST_CASE("weights combine per task") {
    TaskLossBundle b;
    b.diar = b.sep = b.asr = 1.0;
    CHECK(combine(LossWeights{}, b) == doctest::Approx(1.0).epsilon(1e-15));
    b.sep.reset();
    CHECK(combine({0.5, 0.0, 2.0}, b) == 2.5);
    CHECK(active_tasks({0.0, 0.2, 0.0}) == std::vector<Task>{Task::kSep});
    CHECK_THROWS_AS(validate(LossWeights{0, 0, 0}), ConfigError);
    CHECK_THROWS_AS(validate(LossWeights{-1, 1, 0}), ConfigError);
  }

  TEST_CASE("train config validation names the field") {
    TrainConfig t = tiny_train(10);
    t.warmup = 11;
    try {
      validate(t);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(e.path() == "train.warmup");
    }
  }

  TEST_CASE("divergence guard") {
    TrainConfig t;
    std::vector<double> h(10, 1.0);
    CHECK(divergence_reason(h, std::nan(""), t).has_value());
    CHECK(divergence_reason({}, INFINITY, t).has_value());
    CHECK(divergence_reason(h, 10.5, t).has_value());
    CHECK_FALSE(divergence_reason(h, 9.5, t).has_value());
    CHECK_FALSE(divergence_reason(std::vector<double>(5, 1.0), 100.0, t).has_value());
    h.assign(200, 100.0);
    h.insert(h.end(), 100, 1.0);
    CHECK(divergence_reason(h, 20.0, t).has_value());
    // A loss that hovers around zero is judged against its spread.
    std::vector<double> noisy;
    for (int i = 0; i < 100; ++i) noisy.push_back(i % 2 ? 1.1 : -0.9);
    CHECK_FALSE(divergence_reason(noisy, 1.2, t).has_value());
    CHECK_FALSE(divergence_reason(noisy, 9.0, t).has_value());
    CHECK(divergence_reason(noisy, 9.2, t).has_value());
    CHECK(divergence_reason(std::vector<double>(20, -10.0), 81.0, t).has_value());
    CHECK_FALSE(divergence_reason(std::vector<double>(20, -10.0), 79.0, t).has_value());
    Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(2, 2);
    cost(1, 0) = std::nan("");
    CHECK_THROWS_AS(best_permutation(cost), NonFiniteCostError);
  }

  TEST_CASE("total loss identity and absent tasks") {
    const auto data = generate_dataset(tiny_data(3));
    Model<float> model(tiny_model(), 1);
    const auto batch = pointers(data);
    const LossWeights w{0.2, 0.5, 0.3};
    const auto all = total_loss(model, std::span<const MixtureSample* const>(batch), w);
    REQUIRE(all.diar);
    REQUIRE(all.sep);
    REQUIRE(all.asr);
    CHECK(all.all == w.diar * *all.diar + w.sep * *all.sep + w.asr * *all.asr);
    CHECK(all.diar_perms.size() == 3);

    const auto two = total_loss(model, std::span<const MixtureSample* const>(batch), LossWeights{1, 0, 1});
    CHECK_FALSE(two.sep.has_value());
    CHECK(two.sep_perms.empty());
    CHECK(*two.diar == *all.diar);
    CHECK(*two.asr == *all.asr);
  }

  TEST_CASE("multi-threaded batches match single-threaded bitwise") {
    const auto data = generate_dataset(tiny_data(3));
    const auto batch = pointers(data);
    std::map<std::string, Array<float>> grads[2];
    double totals[2];
    for (int k = 0; k < 2; ++k) {
      Model<float> model(tiny_model(), 1);
      model.store().zero_grad();
      totals[k] = total_loss(model, std::span<const MixtureSample* const>(batch), LossWeights{}, true, k + 1).all;
      for (const auto* p : model.store().all()) grads[k][p->name] = p->grad;
    }
    CHECK(totals[0] == totals[1]);
    for (const auto& [name, g] : grads[0]) CHECK_MESSAGE((g == grads[1][name]).all(), name);
  }

  TEST_CASE("all-infeasible batch is an error only when ASR is weighted") {
    auto data = generate_dataset(tiny_data(2));
    for (auto& d : data) d.transcripts[0] = std::vector<int>(400, 1);
    const auto batch = pointers(data);
    Model<float> model(tiny_model(), 1);
    CHECK_THROWS_AS(total_loss(model, std::span<const MixtureSample* const>(batch), LossWeights{}), BatchError);
    CHECK_NOTHROW(total_loss(model, std::span<const MixtureSample* const>(batch), LossWeights{1, 1, 0}));
  }

  TEST_CASE("single-task gradient scales with its weight") {
    const auto data = generate_dataset(tiny_data(2));
    const auto batch = pointers(data);
    std::map<std::string, Array<double>> g[2];
    const double lambda = 0.7;
    for (int k = 0; k < 2; ++k) {
      Model<double> model(tiny_model(), 2);
      model.store().zero_grad();
      total_loss(model, std::span<const MixtureSample* const>(batch), LossWeights{0, 0, k == 0 ? 1.0 : lambda}, true);
      for (const auto* p : model.store().all()) g[k][p->name] = p->grad;
    }
    for (const auto& [name, g1] : g[0]) {
      const double err = (g[1][name] - lambda * g1).abs().maxCoeff();
      CHECK_MESSAGE(err < 1e-7, name);
    }
  }

  TEST_CASE("backward of the batch total matches finite differences") {
    const auto data = generate_dataset(tiny_data(2));
    const auto batch = pointers(data);
    const std::span<const MixtureSample* const> view(batch);
    Model<double> model(tiny_model(Fusion::kRwse), 4);
    Rng rng(5);
    for (auto* p : model.store().all()) {
      if (p->name.find("logits") != std::string::npos) {
        for (Index i = 0; i < p->value.size(); ++i) p->value(i) = rng.normal();
      }
    }
    const LossWeights w{0.33, 0.33, 0.34};
    model.store().zero_grad();
    total_loss(model, view, w, true);
    const double eps = 1e-5;
    for (const char* name : {"encoder.rwse_logits.diar", "encoder.rwse_logits.sep", "encoder.rwse_logits.asr",
                             "encoder.frontend.conv1.weight", "diar.linear.weight", "sep.decoder.weight",
                             "asr.ctc.weight", "asr.decoder.out.weight"}) {
      auto& p = model.store().at(name);
      for (Index i = 0; i < std::min<Index>(3, p.value.size()); ++i) {
        const double v = p.value(i);
        p.value(i) = v + eps;
        const double up = total_loss(model, view, w).all;
        p.value(i) = v - eps;
        const double down = total_loss(model, view, w).all;
        p.value(i) = v;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = p.grad(i);
        const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        CHECK_MESSAGE(rel < 1e-4, name << "[" << i << "] analytic " << analytic << " numeric " << numeric);
      }
    }
  }

  TEST_CASE("epoch shuffle visits every item once") {
    const auto data = generate_dataset(tiny_data(5));
    Model<float> model(tiny_model(), 1);
    TrainConfig t = tiny_train(10, 5);
    Trainer trainer(model, data, t);
    for (long s = 1; s <= 3; ++s) {
      auto idx = trainer.batch_indices(s);
      std::sort(idx.begin(), idx.end());
      CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4});
    }
    CHECK(trainer.batch_indices(1) != trainer.batch_indices(2));
  }

  TEST_CASE("zero learning rate leaves parameters unchanged") {
    const auto data = generate_dataset(tiny_data(1));
    Model<float> model(tiny_model(), 1);
    const auto before = snapshot(model.store());
    TrainConfig t = tiny_train(2, 2);
    t.lr = 0;
    Trainer trainer(model, data, t);
    const auto logs = trainer.run();
    REQUIRE(logs.size() == 2);
    CHECK(logs[0].losses.all == logs[1].losses.all);
    for (const auto* p : model.store().all()) CHECK_MESSAGE((p->value == before.at(p->name)).all(), p->name);
  }

  TEST_CASE("every step satisfies the weighted-sum identity") {
    const auto data = generate_dataset(tiny_data(4));
    Model<float> model(tiny_model(), 1);
    TrainConfig t = tiny_train(4, 2);
    t.weights = {0.25, 0.5, 0.25};
    Trainer trainer(model, data, t);
    for (const auto& log : trainer.run()) {
      const auto& l = log.losses;
      CHECK(l.all == 0.25 * *l.diar + 0.5 * *l.sep + 0.25 * *l.asr);
    }
  }

  TEST_CASE("disabled heads stay bitwise unchanged") {
    const auto data = generate_dataset(tiny_data(3));
    Model<float> model(tiny_model(), 1);
    const auto before = snapshot(model.store());
    TrainConfig t = tiny_train(3, 2);
    t.weights = {1, 0, 0};
    Trainer trainer(model, data, t);
    trainer.run();
    int frozen = 0;
    for (const auto* p : model.store().all()) {
      const bool same = (p->value == before.at(p->name)).all();
      if (exclusive_to(p->name, Task::kSep) || exclusive_to(p->name, Task::kAsr)) {
        CHECK_MESSAGE(same, p->name);
        ++frozen;
      }
      if (p->name == "diar.linear.weight" || p->name == "encoder.rwse_logits.diar") CHECK_FALSE(same);
    }
    CHECK(frozen > 10);
  }

  TEST_CASE("seeded runs write identical loss logs") {
    const auto data = generate_dataset(tiny_data(4));
    std::string logs[2];
    for (int k = 0; k < 2; ++k) {
      const auto dir = scratch("seed" + std::to_string(k));
      Model<float> model(tiny_model(), 7);
      Trainer trainer(model, data, tiny_train(3, 2), dir);
      trainer.run();
      logs[k] = slurp(dir / kLossLogName);
      CHECK(std::filesystem::exists(dir / kFinalCheckpointName));
    }
    CHECK(logs[0] == logs[1]);
    CHECK(logs[0].rfind(loss_csv_header(), 0) == 0);
  }

  TEST_CASE("resume reproduces the uninterrupted run") {
    const auto data = generate_dataset(tiny_data(4));
    TrainConfig t = tiny_train(4, 2);
    t.checkpoint_every = 2;
    const auto dir_a = scratch("resume_a");
    Model<float> a(tiny_model(), 7);
    Trainer ta(a, data, t, dir_a);
    const auto full = ta.run();
    REQUIRE(std::filesystem::exists(ta.checkpoint_path(2)));

    const auto dir_b = scratch("resume_b");
    std::filesystem::create_directories(dir_b);
    std::filesystem::copy_file(dir_a / kLossLogName, dir_b / kLossLogName);
    Model<float> b(tiny_model(), 99);
    Trainer tb(b, data, t, dir_b);
    tb.resume(ta.checkpoint_path(2));
    CHECK(tb.next_step() == 3);
    const auto rest = tb.run();
    REQUIRE(rest.size() == 2);
    CHECK(rest[0].losses.all == full[2].losses.all);
    CHECK(rest[1].losses.all == full[3].losses.all);
    CHECK(slurp(dir_a / kLossLogName) == slurp(dir_b / kLossLogName));
    for (const auto* p : a.store().all()) CHECK_MESSAGE((p->value == b.store().at(p->name).value).all(), p->name);
  }

  TEST_CASE("ASR pre-training initializes a joint run") {
    const auto data = generate_dataset(tiny_data(4));
    const auto dir = scratch("pretrain");
    TrainConfig t = tiny_train(40, 2);
    t.lr = 3e-3;
    Model<float> pre(tiny_model(), 11);
    pretrain_asr(pre, data, t, dir);
    const auto ckpt = dir / kFinalCheckpointName;

    const auto batch = pointers(data);
    const std::span<const MixtureSample* const> view(batch);
    Model<float> flat(tiny_model(), 12);
    Model<float> init(tiny_model(), 12);
    load_asr_init(init, ckpt);
    const double flat_asr = *total_loss(flat, view, LossWeights{}).asr;
    const double init_asr = *total_loss(init, view, LossWeights{}).asr;
    CHECK(init_asr < flat_asr);

    for (const auto* p : init.store().all()) {
      const auto& src = pre.store().at(p->name).value;
      if (p->name.starts_with("encoder.") || p->name.starts_with("asr.")) {
        CHECK_MESSAGE((p->value == src).all(), p->name);
      } else {
        CHECK_MESSAGE((p->value == flat.store().at(p->name).value).all(), p->name);
      }
    }

    Model<float> same(tiny_model(), 12);
    TrainConfig joint = tiny_train(1, 2);
    joint.init_asr = ckpt.string();
    Trainer trainer(same, data, joint);
    const auto a = pre.infer(data[0].mixture);
    const auto b = same.infer(data[0].mixture);
    CHECK((a.probs.size() > 0));
    CHECK(a.hypotheses == b.hypotheses);
    const auto x = total_loss(pre, view, LossWeights{0, 0, 1});
    const auto y = total_loss(same, view, LossWeights{0, 0, 1});
    CHECK(*x.asr == *y.asr);

    ModelConfig wider = tiny_model();
    wider.asr.ff_dim = 20;
    Model<float> mismatch(wider, 12);
    try {
      load_asr_init(mismatch, ckpt);
      FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
      REQUIRE_FALSE(e.names().empty());
      for (const auto& n : e.names()) CHECK_MESSAGE(n.find(".ff.") != std::string::npos, n);
    }
  }

  TEST_CASE("single-batch overfit") {
    const auto data = generate_dataset(tiny_data(2));
    Model<float> model(tiny_model(), 3);
    TrainConfig t = tiny_train(150, 2);
    t.lr = 3e-3;
    t.warmup = 10;
    Trainer trainer(model, data, t);
    const auto logs = trainer.run();
    const double first = logs.front().losses.all;
    CHECK(first > 0);
    CHECK(logs.back().losses.all < 0.1 * first);
    CHECK(*logs.back().losses.diar < *logs.front().losses.diar);
    CHECK(*logs.back().losses.asr < *logs.front().losses.asr);
  }

  TEST_CASE("config json round-trips and names bad paths") {
    RunConfig c;
    c.train.weights = {0.5, 0.25, 0.25};
    c.model.encoder.fusion = Fusion::kWeightedSum;
    c.model.asr.vocab_size = c.data.vocab_size;
    const RunConfig back = parse_run_config(to_json(c));
    CHECK(to_json(back) == to_json(c));

    const auto bad = [](const char* text) {
      try {
        parse_run_config(nlohmann::json::parse(text));
      } catch (const ConfigError& e) {
        return e.path();
      }
      return std::string("none");
    };
    CHECK(bad(R"({"data": {"speakers": 5}})") == "data.speakers");
    CHECK(bad(R"({"model": {"encoder": {"heads": 3}}})") == "model.encoder.heads");
    CHECK(bad(R"({"train": {"weights": {"diar": -1}}})") == "train.weights.diar");
    CHECK(bad(R"({"train": {"fusion": "max"}})") == "train.fusion");
    CHECK(bad(R"({"train": {"stepz": 3}})") == "train.stepz");
    CHECK(bad(R"({"model": {"speakers": 3}})") == "model.speakers");
    CHECK(bad(R"({"eval": {"median_frames": 4}})") == "eval.median_frames");
    CHECK(bad(R"({"data": {"num_items": "ten"}})") == "data.num_items");
    CHECK(bad(R"({"train": {"init": "flat", "fusion": "none"}})") == "none");
  }
}
