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

#include "support/primitive_cases.h"
#include "ume/encoder.h"
#include "ume/gradcheck.h"

using namespace ume;
using Td = Tensor<double>;
using testing::random_array;

namespace {

EncoderConfig small_config(Fusion fusion = Fusion::kRwse, int layers = 3) {
  EncoderConfig c;
  c.layers = layers;
  c.d_model = 8;
  c.heads = 2;
  c.ff_dim = 16;
  c.fusion = fusion;
  return c;
}

// Puts N(0, s^2) noise into every parameter, so zero-initialized biases and
// unit norms are exercised too.
template <typename S>
void randomize(ParameterStore<S>& store, Rng& rng, double s = 0.3) {
  for (auto* p : store.all())
    for (Index i = 0; i < p->value.size(); ++i) p->value(i) += static_cast<S>(s * rng.normal());
}

std::vector<Td> random_layers(int n, Shape shape, Rng& rng) {
  std::vector<Td> out;
  for (int l = 0; l < n; ++l) out.push_back(Td::constant(shape, random_array(shape_size(shape), rng)));
  return out;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("frame arithmetic") {
    ParameterStore<double> store;
    Rng rng(1);
    Encoder<double> enc(store, small_config(), rng);
    Binding<double> b;
    for (Index t : {8, 9, 10, 11, 16, 37, 2000}) {
      auto layers = enc.encode_layers(b, Td::constant({t}, random_array(t, rng)));
      REQUIRE(layers.size() == 3);
      CHECK(layers[0].shape() == Shape{t / 4, 8});
      CHECK(encoder_frames(t) == t / 4);
    }
    CHECK_THROWS_AS(enc.encode_layers(b, Td::zeros({7})), ShapeError);
  }

  TEST_CASE("zero input with zero conv weights gives time-constant layers") {
    ParameterStore<double> store;
    Rng rng(2);
    Encoder<double> enc(store, small_config(), rng);
    randomize(store, rng);
    for (auto* p : store.all()) {
      if (p->name.find("frontend") != std::string::npos && p->name.ends_with(".weight")) p->value.setZero();
      if (p->name.find("depthwise.weight") != std::string::npos) p->value.setZero();
    }
    Binding<double> b;
    auto out = enc.forward(b, Td::zeros({64}), {Task::kDiar, Task::kSep, Task::kAsr});
    auto constant_rows = [](const Td& h) {
      const auto m = h.matrix();
      for (Index t = 1; t < m.rows(); ++t)
        if ((m.row(t) - m.row(0)).cwiseAbs().maxCoeff() > 1e-12) return false;
      return true;
    };
    for (const auto& h : out.layers) CHECK(constant_rows(h));
    for (const auto& [task, h] : out.fused) CHECK(constant_rows(h));
    CHECK(out.layers.back().matrix().row(0).cwiseAbs().maxCoeff() > 1e-3);
  }

  TEST_CASE("shifting the input by 4 samples shifts interior frames by 1") {
    // Global self-attention mixes every frame, so exact equivariance is only
    // checked for the convolutional path (attention output projection zeroed).
    ParameterStore<double> store;
    Rng rng(3);
    Encoder<double> enc(store, small_config(), rng);
    randomize(store, rng);
    for (auto* p : store.all())
      if (p->name.find("attn.out") != std::string::npos) p->value.setZero();
    const Index t = 256;
    const Array<double> x = random_array(t + 4, rng);
    Binding<double> b;
    auto a = enc.encode_layers(b, Td::constant({t}, x.head(t)));
    auto s = enc.encode_layers(b, Td::constant({t}, x.tail(t)));
    const Index frames = t / 4, margin = 2 + 3;
    for (std::size_t l = 0; l < a.size(); ++l) {
      const auto ma = a[l].matrix(), ms = s[l].matrix();
      double worst = 0;
      for (Index f = margin; f + margin < frames; ++f)
        worst = std::max(worst, (ms.row(f - 1) - ma.row(f)).cwiseAbs().maxCoeff());
      CHECK(worst < 1e-12);
    }
    // With attention restored the shift still holds approximately in the interior.
    randomize(store, rng, 0.05);
    auto a2 = enc.encode_layers(b, Td::constant({t}, x.head(t)));
    auto s2 = enc.encode_layers(b, Td::constant({t}, x.tail(t)));
    const auto ma = a2.back().matrix(), ms = s2.back().matrix();
    double worst = 0, scale = ma.cwiseAbs().maxCoeff();
    for (Index f = margin; f + margin < frames; ++f)
      worst = std::max(worst, (ms.row(f - 1) - ma.row(f)).cwiseAbs().maxCoeff());
    CHECK(worst < 0.1 * scale);
  }

  TEST_CASE("absolute positional encoding breaks shift equivariance") {
    ParameterStore<double> store;
    Rng rng(4);
    auto c = small_config();
    c.positional_encoding = true;
    Encoder<double> enc(store, c, rng);
    for (auto* p : store.all())
      if (p->name.find("attn.out") != std::string::npos) p->value.setZero();
    Binding<double> b;
    auto out = enc.encode_layers(b, Td::zeros({64}));
    const auto m = out[0].matrix();
    CHECK((m.row(3) - m.row(4)).cwiseAbs().maxCoeff() > 1e-3);
  }

  TEST_CASE("weighted sum") {
    Rng rng(5);
    SUBCASE("single layer ignores the logit") {
      auto layers = random_layers(1, {4, 3}, rng);
      for (double v : {-5.0, 0.0, 7.0}) {
        Td ws = weighted_sum(layers, Td::constant({1}, Array<double>::Constant(1, v)));
        CHECK((ws.value() == layers[0].value()).all());
        CHECK((rwse(ws, layers[0]).value() == 2.0 * layers[0].value()).all());
      }
    }
    SUBCASE("uniform logits average the layers") {
      auto layers = random_layers(4, {5, 3}, rng);
      Td ws = weighted_sum(layers, Td::zeros({4}));
      Array<double> mean = (layers[0].value() + layers[1].value() + layers[2].value() + layers[3].value()) / 4.0;
      CHECK((ws.value() - mean).abs().maxCoeff() < 1e-14);
    }
    SUBCASE("a saturated logit selects its layer") {
      auto layers = random_layers(4, {5, 3}, rng);
      Array<double> logits(4);
      logits << 0, 0, 20, 0;
      Td ws = weighted_sum(layers, Td::constant({4}, logits));
      CHECK((ws.value() - layers[2].value()).abs().maxCoeff() < 1e-6);
      // float path too
      std::vector<Tensor<float>> lf;
      for (auto& l : layers) lf.push_back(Tensor<float>::constant(l.shape(), l.value().cast<float>()));
      Tensor<float> wf = weighted_sum(lf, Tensor<float>::constant({4}, logits.cast<float>()));
      CHECK((wf.value() - lf[2].value()).abs().maxCoeff() < 1e-6);
    }
    SUBCASE("errors") {
      auto layers = random_layers(3, {2, 2}, rng);
      CHECK_THROWS_AS(weighted_sum(layers, Td::zeros({2})), ShapeError);
      CHECK_THROWS_AS(rwse(layers[0], Td::zeros({2, 3})), ShapeError);
      layers[1] = Td::zeros({3, 2});
      CHECK_THROWS_AS(weighted_sum(layers, Td::zeros({3})), ShapeError);
    }
  }

  TEST_CASE("rwse equals the weighted sum plus the last layer") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      auto layers = random_layers(4, {6, 5}, rng);
      const Td logits = Td::constant({4}, random_array(4, rng));
      const Td ws = weighted_sum(layers, logits);
      const Td enc = rwse(ws, layers.back());
      // independent weighted sum
      Array<double> w = logits.value().exp();
      w /= w.sum();
      Array<double> oracle = Array<double>::Zero(30);
      for (int l = 0; l < 4; ++l) oracle += w(l) * layers[l].value();
      CHECK(((enc.value() - layers.back().value()) - oracle).abs().maxCoeff() < 1e-12);
      CHECK((enc.value() == (ws.value() + layers.back().value())).all());
      CHECK((rwse(Td::zeros({6, 5}), layers.back()).value() == layers.back().value()).all());
    }
  }

  TEST_CASE("fusion modes and per-task independence") {
    const Index t = 48;
    Rng xr(7);
    const Array<double> x = random_array(t, xr);
    std::map<Fusion, std::vector<std::string>> names;
    for (Fusion f : {Fusion::kLastLayer, Fusion::kWeightedSum, Fusion::kRwse}) {
      ParameterStore<double> store;
      Rng rng(8);
      Encoder<double> enc(store, small_config(f), rng);
      randomize(store, rng);
      names[f] = store.names();
      Binding<double> b;
      auto out = enc.forward(b, Td::constant({t}, x), {Task::kDiar, Task::kSep, Task::kAsr});
      if (f == Fusion::kLastLayer) {
        CHECK(enc.logits(Task::kDiar) == nullptr);
        for (auto& [task, h] : out.fused) CHECK((h.value() == out.layers.back().value()).all());
        continue;
      }
      for (Task task : kAllTasks) {
        const auto* p = enc.logits(task);
        REQUIRE(p != nullptr);
        Array<double> w = p->value.exp();
        w /= w.sum();
        CHECK((w > 0).all());
        CHECK(std::abs(w.sum() - 1.0) < 1e-6);
      }
      // perturb only the diar weights
      enc.logits(Task::kDiar)->value(0) += 1.5;
      Binding<double> b2;
      auto out2 = enc.forward(b2, Td::constant({t}, x), {Task::kDiar, Task::kSep, Task::kAsr});
      CHECK((out2.fused[Task::kSep].value() == out.fused[Task::kSep].value()).all());
      CHECK((out2.fused[Task::kAsr].value() == out.fused[Task::kAsr].value()).all());
      CHECK((out2.fused[Task::kDiar].value() - out.fused[Task::kDiar].value()).abs().maxCoeff() > 1e-6);
    }
    CHECK(names[Fusion::kLastLayer] != names[Fusion::kWeightedSum]);
    CHECK(names[Fusion::kWeightedSum] != names[Fusion::kRwse]);
    CHECK(names[Fusion::kLastLayer] != names[Fusion::kRwse]);
    CHECK(names[Fusion::kRwse].size() == names[Fusion::kLastLayer].size() + 3);
  }

  TEST_CASE("encoder gradients pass finite differences") {
    for (Fusion f : {Fusion::kWeightedSum, Fusion::kRwse}) {
      ParameterStore<double> store;
      Rng rng(9);
      Encoder<double> enc(store, small_config(f, 2), rng);
      randomize(store, rng, 0.2);
      const Array<double> x = random_array(32, rng);
      const Array<double> proj = random_array(8 * 8, rng);
      auto report = grad_check(
          store,
          [&](Binding<double>& b) {
            auto out = enc.forward(b, Td::constant({32}, x), {Task::kDiar, Task::kAsr});
            const Td p = Td::constant({8, 8}, proj);
            return add(sum(mul(out.fused[Task::kDiar], p)), sum(mul(mul(out.fused[Task::kAsr], p), p)));
          },
          {.max_entries = 12, .seed = 3});
      for (const auto& name : report.failing()) MESSAGE(name);
      CHECK(report.pass);
    }
  }

  TEST_CASE("configuration validation") {
    EncoderConfig c;
    CHECK_NOTHROW(validate(c));
    c.heads = 3;
    CHECK_THROWS_WITH(validate(c), doctest::Contains("model.encoder.heads"));
    c = {};
    c.layers = 0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    CHECK(parse_fusion("rwse") == Fusion::kRwse);
    CHECK_THROWS(parse_fusion("bogus"));
  }
}
