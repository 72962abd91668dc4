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

#include "support/oracles.h"
#include "support/primitive_cases.h"
#include "ume/asr.h"
#include "ume/gradcheck.h"

using namespace ume;
using Td = Tensor<double>;
using testing::random_array;

namespace {

AsrConfig small_config(int vocab = 3) {
  AsrConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.ff_dim = 12;
  c.encoder_blocks = 1;
  c.decoder_blocks = 1;
  c.vocab_size = vocab;
  return c;
}

Eigen::ArrayXXd random_log_probs(Index t, Index k, Rng& rng) {
  Eigen::ArrayXXd z(t, k);
  for (Index i = 0; i < t; ++i) {
    for (Index j = 0; j < k; ++j) z(i, j) = 1.5 * rng.normal();
    z.row(i) -= std::log(z.row(i).exp().sum());
  }
  return z;
}

Td row_major(const Eigen::ArrayXXd& a) {
  Array<double> v(a.size());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) v(i * a.cols() + j) = a(i, j);
  return Td::constant({a.rows(), a.cols()}, v);
}

}  // namespace

TEST_SUITE("asr") {
  TEST_CASE("ctc simple cases") {
    Rng rng(1);
    const auto lp = random_log_probs(1, 3, rng);
    const std::vector<int> a = {2};
    CHECK(ctc_loss(row_major(lp), a).item() == doctest::Approx(-lp(0, 2)).epsilon(1e-12));
    const auto lp4 = random_log_probs(4, 3, rng);
    CHECK(ctc_loss(row_major(lp4), std::span<const int>()).item() ==
          doctest::Approx(-lp4.col(0).sum()).epsilon(1e-12));
  }

  TEST_CASE("ctc equals exhaustive path enumeration") {
    Rng rng(2);
    int checked = 0;
    for (Index t = 1; t <= 4; ++t)
      for (int v = 1; v <= 2; ++v)
        for (int u = 0; u <= 2; ++u)
          for (int trial = 0; trial < 8; ++trial) {
            std::vector<int> target;
            for (int i = 0; i < u; ++i) target.push_back(static_cast<int>(rng.uniform_int(1, v)));
            const auto lp = random_log_probs(t, v + 1, rng);
            if (t < ctc_min_frames(target)) {
              CHECK_THROWS_AS(ctc_loss(row_major(lp), target), CtcInfeasible);
              CHECK(std::isinf(ctc_loss_value(row_major(lp).matrix().array(), target)));
              continue;
            }
            const double oracle = testing::ctc_brute_force(lp, target);
            CHECK(std::abs(ctc_loss(row_major(lp), target).item() - oracle) < 1e-9);
            ++checked;
          }
    CHECK(checked > 100);
    // the example in the spec: T=3, |V|=2, target [a, b]
    const auto lp = random_log_probs(3, 3, rng);
    const std::vector<int> ab = {1, 2};
    CHECK(std::abs(ctc_loss(row_major(lp), ab).item() - testing::ctc_brute_force(lp, ab)) < 1e-9);
    CHECK(ctc_min_frames(std::vector<int>{1, 1, 2}) == 4);
  }

  TEST_CASE("ctc gradient") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      ParameterStore<double> store;
      const Index t = 3 + trial % 4;
      auto& z = store.create("z", {t, 4}, Init::kZeros, rng);
      z.value = random_array(t * 4, rng);
      std::vector<int> target;
      for (int i = 0; i < 1 + trial % 3; ++i) target.push_back(static_cast<int>(rng.uniform_int(1, 3)));
      if (t < ctc_min_frames(target)) continue;
      // through log_softmax and also on raw scores
      auto r1 = grad_check(store, [&](Binding<double>& b) { return ctc_loss(log_softmax(b(z), 1), target); });
      auto r2 = grad_check(store, [&](Binding<double>& b) { return ctc_loss(b(z), target); });
      CHECK(r1.pass);
      CHECK(r2.pass);
    }
    CHECK_THROWS_AS(ctc_loss(Td::zeros({0, 3}), std::vector<int>{1}), ShapeError);
  }

  TEST_CASE("speaker encoders") {
    Rng rng(4);
    ParameterStore<double> store;
    AsrHead<double> head(store, small_config(), 6, 2, rng);
    Binding<double> b;
    const Td h = Td::constant({17, 6}, random_array(17 * 6, rng));
    auto hs = head.speaker_encode(b, h);
    REQUIRE(hs.size() == 2);
    CHECK(hs[0].shape() == Shape{4, 8});
    CHECK(asr_frames(17) == 4);
    CHECK(asr_frames(3) == 0);
    CHECK((hs[0].value() != hs[1].value()).any());
    CHECK_THROWS_AS(head.speaker_encode(b, Td::zeros({3, 6})), ShapeError);

    // copying branch 1's weights into branch 2 makes them identical
    for (auto* p : store.all())
      if (p->name.starts_with("asr.spk2.")) p->value = store.at("asr.spk1." + p->name.substr(9)).value;
    Binding<double> fresh;
    auto same = head.speaker_encode(fresh, h);
    CHECK((same[0].value() == same[1].value()).all());

    ParameterStore<double> one_store;
    AsrHead<double> one(one_store, small_config(), 6, 1, rng);
    CHECK(one.speaker_encode(b, h).size() == 1);
  }

  TEST_CASE("attention decoder loss") {
    Rng rng(5);
    ParameterStore<double> store;
    AsrHead<double> head(store, small_config(4), 6, 1, rng);
    Binding<double> b;
    const Td hidden = Td::constant({3, 8}, random_array(24, rng));
    const std::vector<int> target = {2};
    CHECK(head.decoder_log_probs(b, hidden, target).shape() == Shape{2, 5});
    // zero output projection: uniform over |V| + 1 classes
    store.at("asr.decoder.out.weight").value.setZero();
    store.at("asr.decoder.out.bias").value.setZero();
    b = Binding<double>();
    CHECK(head.attention_loss(b, hidden, target).item() == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(head.attention_loss(b, hidden, std::vector<int>{1, 3, 4}).item() ==
          doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK_THROWS(head.attention_loss(b, hidden, std::vector<int>{}));
    CHECK_THROWS(head.attention_loss(b, hidden, std::vector<int>{5}));
  }

  TEST_CASE("single-token target averages two terms") {
    Rng rng(6);
    ParameterStore<double> store;
    AsrHead<double> head(store, small_config(3), 6, 1, rng);
    Binding<double> b;
    const Td hidden = Td::constant({3, 8}, random_array(24, rng));
    const std::vector<int> target = {3};
    const Td lp = head.decoder_log_probs(b, hidden, target);
    const double expected = -(lp.value()(0 * 4 + 2) + lp.value()(1 * 4 + 3)) / 2;
    CHECK(head.attention_loss(b, hidden, target).item() == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("decoder is causal") {
    Rng rng(7);
    ParameterStore<double> store;
    AsrHead<double> head(store, small_config(3), 6, 1, rng);
    Binding<double> b;
    const Td hidden = Td::constant({3, 8}, random_array(24, rng));
    const Td a = head.decoder_log_probs(b, hidden, std::vector<int>{1, 2, 3});
    const Td c = head.decoder_log_probs(b, hidden, std::vector<int>{1, 3, 1});
    // rows 0 and 1 see only sos and token 1
    CHECK((a.value().head(8) - c.value().head(8)).abs().maxCoeff() < 1e-12);
    CHECK((a.value().tail(8) - c.value().tail(8)).abs().maxCoeff() > 1e-9);
  }

  TEST_CASE("asr losses pass finite differences on a 3-frame input") {
    Rng rng(8);
    ParameterStore<double> store;
    AsrHead<double> head(store, small_config(3), 5, 2, rng);
    for (auto* p : store.all()) p->value += 0.2 * random_array(p->value.size(), rng);
    auto& h = store.create("h_enc", {12, 5}, Init::kZeros, rng);
    h.value = random_array(60, rng);
    const std::vector<std::vector<int>> targets = {{1, 2}, {3}};
    auto report = grad_check(
        store,
        [&](Binding<double>& b) {
          auto hidden = head.speaker_encode(b, b(h));  // 12 frames -> 3
          return head.pit_loss(b, hidden, targets).loss;
        },
        {.max_entries = 8, .seed = 2});
    for (const auto& name : report.failing()) MESSAGE(name);
    CHECK(report.pass);
  }

  TEST_CASE("permutation selection") {
    Rng rng(9);
    ParameterStore<double> store;
    AsrConfig cfg = small_config(3);
    AsrHead<double> head(store, cfg, 5, 3, rng);
    for (int trial = 0; trial < 20; ++trial) {
      Binding<double> b;
      std::vector<Td> hidden;
      for (int c = 0; c < 3; ++c) hidden.push_back(Td::constant({5, 8}, 2.0 * random_array(40, rng)));
      std::vector<std::vector<int>> targets;
      for (int c = 0; c < 3; ++c) {
        std::vector<int> t;
        for (int i = 0; i < 1 + rng.uniform_int(0, 2); ++i) t.push_back(static_cast<int>(rng.uniform_int(1, 3)));
        targets.push_back(t);
      }
      auto r = head.pit_loss(b, hidden, targets);
      REQUIRE(!r.skipped);
      // independent evaluator: brute-force CTC per pairing
      auto ctc_sum = [&](const std::vector<int>& p) {
        double total = 0;
        for (int c = 0; c < 3; ++c) {
          const Td lp = head.ctc_log_probs(b, hidden[c]);
          Eigen::ArrayXXd m(5, 4);
          for (Index i = 0; i < 5; ++i)
            for (Index j = 0; j < 4; ++j) m(i, j) = lp.value()(i * 4 + j);
          total += testing::ctc_brute_force(m, targets[p[c]]);
        }
        return total;
      };
      const double best = testing::brute_force_min(3, ctc_sum);
      CHECK(ctc_sum(r.perm) == doctest::Approx(best).epsilon(1e-9));
      double selected = 0;
      for (double v : r.ctc) selected += v;
      CHECK(selected == doctest::Approx(best).epsilon(1e-9));
      CHECK(r.loss.item() ==
            doctest::Approx(0.2 * selected + 0.8 * (r.att[0] + r.att[1] + r.att[2])).epsilon(1e-12));
    }
  }

  TEST_CASE("swapped predictions and ties") {
    Rng rng(10);
    ParameterStore<double> store;
    AsrConfig cfg = small_config(3);
    cfg.ctc_weight = 1.0;
    AsrHead<double> head(store, cfg, 5, 2, rng);
    // Drive the CTC head directly from hand-made hidden states via a one-hot projection.
    auto& w = store.at("asr.ctc.weight").value;  // [8 x 4]
    w.setZero();
    for (Index k = 0; k < 4; ++k) w(k * 4 + k) = 20.0;
    store.at("asr.ctc.bias").value.setZero();
    auto hidden_for = [](const std::vector<int>& frames) {
      Array<double> v = Array<double>::Zero(static_cast<Index>(frames.size()) * 8);
      for (std::size_t t = 0; t < frames.size(); ++t) v(static_cast<Index>(t) * 8 + frames[t]) = 1.0;
      return Td::constant({static_cast<Index>(frames.size()), 8}, v);
    };
    const std::vector<Td> hidden = {hidden_for({2, 0, 3}), hidden_for({1, 1, 0})};
    Binding<double> b;
    auto r = head.pit_loss(b, hidden, {{1}, {2, 3}});
    CHECK(r.perm == Permutation{1, 0});
    CHECK(greedy_decode(head.ctc_log_probs(b, hidden[0]).matrix().cast<float>().array()) == std::vector<int>{2, 3});
    auto tie = head.pit_loss(b, hidden, {{2}, {2}});
    CHECK(tie.perm == Permutation{0, 1});
    // with lambda_ctc = 1 the selected objective is minimal over all permutations
    for (const auto& p : all_permutations(2)) {
      double total = 0;
      const std::vector<std::vector<int>> targets = {{1}, {2, 3}};
      for (int c = 0; c < 2; ++c) total += ctc_loss(head.ctc_log_probs(b, hidden[c]), targets[p[c]]).item();
      CHECK(r.loss.item() <= total + 1e-12);
    }
    // infeasible under every permutation: 3 frames, targets of 4 tokens
    auto skip = head.pit_loss(b, hidden, {{1, 2, 1, 2}, {3, 1, 3, 1}});
    CHECK(skip.skipped);
    CHECK(!skip.loss.defined());
    // feasible only under the swap
    auto forced = head.pit_loss(b, {hidden_for({1, 1, 1, 1, 0}), hidden[1]}, {{1, 2, 1, 2}, {3}});
    CHECK(forced.perm == Permutation{0, 1});
  }

  TEST_CASE("combined selection flag") {
    Rng rng(11);
    ParameterStore<double> store;
    AsrConfig cfg = small_config(3);
    cfg.selection = AsrSelection::kCombined;
    AsrHead<double> head(store, cfg, 5, 2, rng);
    Binding<double> b;
    std::vector<Td> hidden = {Td::constant({4, 8}, random_array(32, rng)), Td::constant({4, 8}, random_array(32, rng))};
    const std::vector<std::vector<int>> targets = {{1, 2}, {3}};
    auto r = head.pit_loss(b, hidden, targets);
    for (const auto& p : all_permutations(2)) {
      double total = 0;
      for (int c = 0; c < 2; ++c) {
        total += 0.2 * ctc_loss(head.ctc_log_probs(b, hidden[c]), targets[p[c]]).item() +
                 0.8 * head.attention_loss(b, hidden[c], targets[p[c]]).item();
      }
      CHECK(r.loss.item() <= total + 1e-12);
    }
  }

  TEST_CASE("greedy decoding") {
    using RowF = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowF s = RowF::Zero(4, 3);
    s(0, 1) = s(1, 1) = s(2, 0) = s(3, 2) = 1;
    CHECK(greedy_decode(s) == std::vector<int>{1, 2});
    CHECK(greedy_decode(RowF::Zero(5, 3)).empty());
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      const Index t = 1 + rng.uniform_int(0, 12);
      RowF z(t, 4);
      std::vector<int> path;
      for (Index i = 0; i < t; ++i) {
        for (Index j = 0; j < 4; ++j) z(i, j) = static_cast<float>(rng.normal());
        Index arg = 0;
        for (Index j = 1; j < 4; ++j)
          if (z(i, j) > z(i, arg)) arg = j;
        path.push_back(static_cast<int>(arg));
      }
      const auto hyp = greedy_decode(z);
      CHECK(hyp == testing::collapse_path(path));
      RowF shifted = z;
      for (Index i = 0; i < t; ++i) shifted.row(i) += static_cast<float>(3 * rng.normal());
      CHECK(greedy_decode(shifted) == hyp);
    }
  }

  TEST_CASE("configuration validation") {
    AsrConfig c;
    CHECK_NOTHROW(validate(c));
    c.ctc_weight = 1.5;
    CHECK_THROWS_WITH(validate(c), doctest::Contains("model.asr.ctc_weight"));
    c = {};
    c.heads = 5;
    CHECK_THROWS_AS(validate(c), ConfigError);
  }
}
