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
#include <sstream>

#include "support/oracles.h"
#include "support/primitive_cases.h"
#include "ume/metrics.h"
#include "ume/sep.h"

using namespace ume;
using testing::random_array;
using Tracks = std::vector<std::vector<int>>;

namespace {

SpeakerSegments spans_of(const Tracks& tracks, double shift) {
  SpeakerSegments out;
  for (const auto& t : tracks) {
    std::vector<Segment> segs;
    for (std::size_t f = 0; f < t.size();) {
      if (!t[f]) {
        ++f;
        continue;
      }
      std::size_t g = f;
      while (g < t.size() && t[g]) ++g;
      segs.push_back({f * shift, g * shift});
      f = g;
    }
    out.push_back(segs);
  }
  return out;
}

Tracks random_tracks(int c, int frames, Rng& rng) {
  Tracks t(static_cast<std::size_t>(c), std::vector<int>(static_cast<std::size_t>(frames)));
  for (auto& track : t) {
    int v = rng.uniform() < 0.5;
    for (auto& x : track) {
      if (rng.uniform() < 0.2) v = 1 - v;
      x = v;
    }
  }
  return t;
}

FrameLabels as_probs(const Tracks& t) {
  FrameLabels p(static_cast<Index>(t[0].size()), static_cast<Index>(t.size()));
  for (std::size_t c = 0; c < t.size(); ++c)
    for (std::size_t f = 0; f < t[c].size(); ++f) p(static_cast<Index>(f), static_cast<Index>(c)) = t[c][f] ? 0.9f : 0.1f;
  return p;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("DER of a perfect prediction is zero") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      const Tracks t = random_tracks(2 + trial % 2, 40, rng);
      for (double collar : {0.0, 0.25, 1.0}) {
        const DerBreakdown d = der(as_probs(t), spans_of(t, 0.1), {collar, 1, 0.5, 0.1});
        CHECK(d.der() == 0.0);
        CHECK(d.miss == 0.0);
        CHECK(d.false_alarm == 0.0);
        CHECK(d.confusion == 0.0);
      }
    }
  }

  TEST_CASE("silent prediction misses everything") {
    Rng rng(2);
    const Tracks t = random_tracks(2, 30, rng);
    const Tracks silent(2, std::vector<int>(30, 0));
    const DerBreakdown d = der_from_decisions(silent, spans_of(t, 0.1), 0.0, 0.1);
    CHECK(d.miss == doctest::Approx(d.total));
    CHECK(d.der() == doctest::Approx(1.0));
  }

  TEST_CASE("hand-tabulated ten-frame case") {
    // frame:      0 1 2 3 4 5 6 7 8 9
    // ref spk1:   1 1 1 1 1 0 0 0 0 0
    // ref spk2:   0 0 0 0 0 1 1 1 1 1
    // sys trk1:   1 1 1 1 0 0 0 0 0 0
    // sys trk2:   0 0 0 0 1 1 1 1 1 1   <- frame 4 given to the wrong speaker
    // per frame (miss, fa, conf): frame 4 -> (0, 0, 1); all others 0.
    // reference speech = 10 frames -> DER = 1/10.
    const Tracks sys = {{1, 1, 1, 1, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1, 1, 1}};
    const SpeakerSegments ref = {{{0.0, 0.5}}, {{0.5, 1.0}}};
    const DerBreakdown d = der_from_decisions(sys, ref, 0.0, 0.1);
    CHECK(d.total == doctest::Approx(1.0));
    CHECK(d.confusion == doctest::Approx(0.1));
    CHECK(d.miss == 0.0);
    CHECK(d.false_alarm == 0.0);
    CHECK(d.der() == doctest::Approx(0.1));
    CHECK(d.mapping == Permutation{0, 1});

    // Swapped track order: the mapping absorbs it.
    const DerBreakdown s = der_from_decisions({sys[1], sys[0]}, ref, 0.0, 0.1);
    CHECK(s.der() == doctest::Approx(0.1));
    CHECK(s.mapping == Permutation{1, 0});

    // A missed frame and a false alarm:
    // sys1 = 1 1 1 0 1 0 0 0 0 0 (frame 3 missed), sys2 = 0 0 0 0 0 1 1 1 1 1 plus frame 0 (false alarm)
    const Tracks mixed = {{1, 1, 1, 0, 1, 0, 0, 0, 0, 0}, {1, 0, 0, 0, 0, 1, 1, 1, 1, 1}};
    const DerBreakdown m = der_from_decisions(mixed, ref, 0.0, 0.1);
    CHECK(m.miss == doctest::Approx(0.1));
    CHECK(m.false_alarm == doctest::Approx(0.1));
    CHECK(m.der() == doctest::Approx(0.2));

    // A 0.12 s collar removes frames whose centers lie within 0.12 s of 0.0, 0.5 and 1.0: frames 0, 4, 5, 9.
    const DerBreakdown c = der_from_decisions(sys, ref, 0.12, 0.1);
    CHECK(c.total == doctest::Approx(0.6));
    CHECK(c.der() == doctest::Approx(0.0));
  }

  TEST_CASE("widening the collar never increases scored error time") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const Tracks ref = random_tracks(2, 60, rng), sys = random_tracks(2, 60, rng);
      double prev_err = std::numeric_limits<double>::infinity();
      for (double collar : {0.0, 0.05, 0.1, 0.25, 0.5}) {
        const DerBreakdown d = der_from_decisions(sys, spans_of(ref, 0.05), collar, 0.05);
        const double err = d.miss + d.false_alarm + d.confusion;
        CHECK(err <= prev_err + 1e-12);
        prev_err = err;
      }
    }
  }

  TEST_CASE("median filter") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const auto t = random_tracks(1, 25, rng)[0];
      CHECK(median_filter(t, 1) == t);
    }
    CHECK(median_filter({0, 0, 1, 0, 0, 1, 1, 1, 0, 1}, 3) == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
    CHECK(median_filter({1, 0, 0}, 3) == std::vector<int>{1, 0, 0});  // edge replicates the 1
    CHECK_THROWS(median_filter({1, 0}, 2));
    CHECK_THROWS(der_from_decisions({{1}}, {{{0, 1}}}, 0.0, 0.0));
  }

  TEST_CASE("reference rasterization") {
    const auto r = rasterize({{{0.0, 0.26}, {0.5, 0.54}}}, 6, 0.1);
    CHECK(r[0] == std::vector<int>{1, 1, 1, 0, 0, 0});  // 0.54 covers 40 percent of frame 5
    const SpeakerSegments s = segments_from_spans({{{0, 1000}}}, 2000);
    CHECK(s[0][0].end == doctest::Approx(0.5));
  }

  TEST_CASE("separation metrics") {
    Rng rng(5);
    const Eigen::ArrayXd s = random_array(100, rng);
    const double top = si_snr(s, s);
    CHECK(si_snr_at_ceiling(top, s, s));
    // The eps ceiling grows with the estimate energy; both report as the "+inf" sentinel.
    CHECK(si_snr_at_ceiling(si_snr(2.0 * s, s), 2.0 * s, s));
    CHECK(sdr_at_ceiling(sdr(s, s), s));
    CHECK(std::abs(sdr(2.0 * s, s)) < 1e-9);
    CHECK(!sdr_at_ceiling(sdr(2.0 * s, s), s));
    CHECK(db_json(top, true) == "+inf");
    CHECK(db_json(3.5, false) == 3.5);
    for (int trial = 0; trial < 20; ++trial) {
      const Eigen::ArrayXd e = random_array(64, rng), r = random_array(64, rng);
      auto loss = si_sdr_pit_loss(std::vector<Tensor<double>>{Tensor<double>::constant({64}, e)},
                                  std::vector<Array<double>>{r});
      CHECK(si_snr(e, r) == doctest::Approx(-loss.loss.item()).epsilon(1e-12));
      CHECK(!si_snr_at_ceiling(si_snr(e, r), e, r));
    }
    CHECK_THROWS(sdr(s, Eigen::ArrayXd::Zero(100)));
    CHECK_THROWS(si_snr(s, Eigen::ArrayXd::Zero(100)));
  }

  TEST_CASE("WER with the optimal assignment") {
    CHECK(wer_optimal_perm({{1, 2}, {3}}, {{1, 2}, {3}}).wer() == 0.0);
    const WerBreakdown sw = wer_optimal_perm({{3}, {1, 2}}, {{1, 2}, {3}});
    CHECK(sw.wer() == 0.0);
    CHECK(sw.assignment == Permutation{1, 0});
    const WerBreakdown d = wer_optimal_perm({{1, 3}}, {{1, 2, 3}});
    CHECK(d.deletions == 1);
    CHECK(d.substitutions == 0);
    CHECK(d.wer() == doctest::Approx(1.0 / 3));
    const EditCounts e = edit_distance({1, 2, 3}, {1, 4, 3, 5});
    CHECK(e.substitutions == 1);
    CHECK(e.insertions == 1);
    CHECK(e.deletions == 0);
    CHECK_THROWS(wer_optimal_perm({{1}}, {{}}));

    Rng rng(6);
    auto rand_seq = [&](int max_len) {
      std::vector<int> v;
      for (int i = 0; i < rng.uniform_int(0, max_len); ++i) v.push_back(static_cast<int>(rng.uniform_int(1, 4)));
      return v;
    };
    for (int trial = 0; trial < 100; ++trial) {
      const int c = 1 + trial % 3;
      std::vector<std::vector<int>> hyps, refs;
      for (int k = 0; k < c; ++k) {
        hyps.push_back(rand_seq(5));
        refs.push_back(rand_seq(5));
      }
      refs[0].push_back(1);
      const WerBreakdown w = wer_optimal_perm(hyps, refs);
      auto under = [&](const std::vector<int>& p) {
        int total = 0;
        for (int k = 0; k < c; ++k) total += edit_distance(refs[p[k]], hyps[k]).total();
        return static_cast<double>(total);
      };
      CHECK(w.substitutions + w.deletions + w.insertions == testing::brute_force_min(c, under));
      for (const auto& p : all_permutations(c)) CHECK(w.wer() <= under(p) / w.reference_tokens + 1e-12);
    }
  }

  TEST_CASE("RTTM round trip") {
    const Tracks sys = {{0, 1, 1, 0, 1}, {1, 1, 0, 0, 0}};
    std::ostringstream out;
    write_rttm(out, "mix00001", sys, 0.008);
    const std::string text = out.str();
    CHECK(text.find("SPEAKER mix00001 1 0.008 0.016 <NA> <NA> spk1 <NA> <NA>") != std::string::npos);
    std::istringstream in(text);
    const auto parsed = parse_rttm(in);
    REQUIRE(parsed.count("mix00001") == 1);
    const DerBreakdown d = der_from_decisions(sys, parsed.at("mix00001"), 0.0, 0.008);
    CHECK(d.der() == 0.0);
    std::istringstream bad("SPEAKER x 1 0.5\n");
    CHECK_THROWS(parse_rttm(bad));
  }

  TEST_CASE("report formatting") {
    ItemReport it;
    it.id = "mix00000";
    it.der = DerBreakdown{0.1, 0.0, 0.0, 1.0, {0, 1}};
    it.si_snr = {40.0, 5.0};
    it.si_snri = {35.0, 2.0};
    it.sdr = {30.0, 4.0};
    it.si_snr_ceiling = {true, false};
    it.sdr_ceiling = {false, false};
    it.wer = wer_optimal_perm({{1}}, {{1, 2}});
    const auto agg = aggregate({it});
    CHECK(*agg.der == doctest::Approx(0.1));
    CHECK(*agg.wer == doctest::Approx(0.5));
    const auto j = report_json({it}, agg);
    CHECK(j["per_item"][0]["si_snr"][0] == "+inf");
    CHECK(j["per_item"][0]["si_snr"][1] == 5.0);
    CHECK(j["aggregate"]["der"] == 0.1);
    const std::string csv = report_csv({it});
    CHECK(csv.starts_with("id,der,wer,si_snr_1,si_snri_1,sdr_1,si_snr_2"));
    CHECK(csv.find("mix00000,0.1,0.5,+inf,+inf,30,5,2,4") != std::string::npos);
  }
}
