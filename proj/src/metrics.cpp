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

#include "ume/metrics.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "ume/sep.h"

namespace ume {

SpeakerSegments segments_from_spans(const std::vector<std::vector<Span>>& spans, int sample_rate) {
  SpeakerSegments out;
  for (const auto& speaker : spans) {
    std::vector<Segment> segs;
    for (const Span& s : speaker) {
      segs.push_back({static_cast<double>(s.start) / sample_rate, static_cast<double>(s.end) / sample_rate});
    }
    out.push_back(std::move(segs));
  }
  return out;
}

double DerBreakdown::der() const {
  const double err = miss + false_alarm + confusion;
  if (total > 0) return err / total;
  return err > 0 ? std::numeric_limits<double>::infinity() : 0.0;
}

std::vector<int> median_filter(const std::vector<int>& track, int width) {
  if (width < 1 || width % 2 == 0) throw std::invalid_argument("median filter width must be odd and positive");
  const Index n = static_cast<Index>(track.size()), half = width / 2;
  std::vector<int> out(track.size());
  for (Index i = 0; i < n; ++i) {
    int ones = 0;
    for (Index j = i - half; j <= i + half; ++j) ones += track[static_cast<std::size_t>(std::clamp<Index>(j, 0, n - 1))];
    out[static_cast<std::size_t>(i)] = 2 * ones > width ? 1 : 0;
  }
  return out;
}

std::vector<std::vector<int>> diarization_decisions(const FrameLabels& probs, double threshold, int median_frames) {
  std::vector<std::vector<int>> out;
  for (Index c = 0; c < probs.cols(); ++c) {
    std::vector<int> track(static_cast<std::size_t>(probs.rows()));
    for (Index f = 0; f < probs.rows(); ++f) track[static_cast<std::size_t>(f)] = probs(f, c) > threshold ? 1 : 0;
    out.push_back(median_filter(track, median_frames));
  }
  return out;
}

std::vector<std::vector<int>> rasterize(const SpeakerSegments& ref, Index frames, double frame_shift) {
  std::vector<std::vector<int>> out;
  for (const auto& segs : ref) {
    std::vector<double> cover(static_cast<std::size_t>(frames), 0.0);
    for (const auto& s : segs) {
      const Index lo = std::max<Index>(0, static_cast<Index>(std::floor(s.start / frame_shift)));
      const Index hi = std::min<Index>(frames - 1, static_cast<Index>(std::ceil(s.end / frame_shift)));
      for (Index f = lo; f <= hi; ++f) {
        const double a = std::max(s.start, f * frame_shift), b = std::min(s.end, (f + 1) * frame_shift);
        if (b > a) cover[static_cast<std::size_t>(f)] += b - a;
      }
    }
    std::vector<int> track(static_cast<std::size_t>(frames));
    for (Index f = 0; f < frames; ++f) track[static_cast<std::size_t>(f)] = cover[static_cast<std::size_t>(f)] > 0.5 * frame_shift + 1e-12;
    out.push_back(std::move(track));
  }
  return out;
}

namespace {

struct FrameErrors {
  double miss = 0, fa = 0, conf = 0, total = 0;
};

FrameErrors score(const std::vector<std::vector<int>>& sys, const std::vector<std::vector<int>>& ref,
                  const Permutation& map, const std::vector<bool>& scored) {
  FrameErrors e;
  const std::size_t frames = scored.size();
  for (std::size_t f = 0; f < frames; ++f) {
    if (!scored[f]) continue;
    int n_ref = 0, n_sys = 0, n_correct = 0;
    for (const auto& r : ref) n_ref += r[f];
    for (std::size_t c = 0; c < sys.size(); ++c) {
      n_sys += sys[c][f];
      n_correct += sys[c][f] && ref[static_cast<std::size_t>(map[c])][f];
    }
    e.miss += std::max(0, n_ref - n_sys);
    e.fa += std::max(0, n_sys - n_ref);
    e.conf += std::min(n_ref, n_sys) - n_correct;
    e.total += n_ref;
  }
  return e;
}

}  // namespace

DerBreakdown der_from_decisions(const std::vector<std::vector<int>>& decisions, const SpeakerSegments& ref_segments,
                                double collar, double frame_shift) {
  if (!(frame_shift > 0)) throw std::invalid_argument("der: frame shift must be positive");
  if (collar < 0) throw std::invalid_argument("der: collar must be non-negative");
  const Index frames = decisions.empty() ? 0 : static_cast<Index>(decisions[0].size());
  auto sys = decisions;
  auto ref = rasterize(ref_segments, frames, frame_shift);
  const std::size_t c = std::max(sys.size(), ref.size());
  if (c == 0) return {};
  sys.resize(c, std::vector<int>(static_cast<std::size_t>(frames), 0));
  ref.resize(c, std::vector<int>(static_cast<std::size_t>(frames), 0));

  std::vector<bool> all(static_cast<std::size_t>(frames), true), scored = all;
  for (const auto& segs : ref_segments)
    for (const auto& s : segs)
      for (Index f = 0; f < frames; ++f) {
        const double center = (f + 0.5) * frame_shift;
        if (std::abs(center - s.start) < collar || std::abs(center - s.end) < collar) scored[static_cast<std::size_t>(f)] = false;
      }

  DerBreakdown best;
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& p : all_permutations(static_cast<int>(c))) {
    const FrameErrors e = score(sys, ref, p, all);
    const double err = e.miss + e.fa + e.conf;
    if (err < best_err) {
      best_err = err;
      best.mapping = p;
    }
  }
  const FrameErrors e = score(sys, ref, best.mapping, scored);
  best.miss = e.miss * frame_shift;
  best.false_alarm = e.fa * frame_shift;
  best.confusion = e.conf * frame_shift;
  best.total = e.total * frame_shift;
  return best;
}

DerBreakdown der(const FrameLabels& probs, const SpeakerSegments& ref, const DerOptions& o) {
  return der_from_decisions(diarization_decisions(probs, o.threshold, o.median_frames), ref, o.collar, o.frame_shift);
}

double si_snr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference) {
  return si_sdr_value(estimate, reference, kMetricEps);
}

double sdr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("sdr: lengths differ");
  const double ss = reference.square().sum();
  if (!(ss > 0)) throw std::invalid_argument("sdr: reference is all zero");
  return 10.0 * std::log10((ss + kMetricEps) / ((estimate - reference).square().sum() + kMetricEps));
}

bool si_snr_at_ceiling(double value, const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference) {
  const Eigen::ArrayXd e = estimate - estimate.mean(), r = reference - reference.mean();
  const double proj = std::pow((e * r).sum(), 2) / r.square().sum();
  return value >= 10.0 * std::log10((proj + kMetricEps) / kMetricEps) - 1e-6;
}

bool sdr_at_ceiling(double value, const Eigen::ArrayXd& reference) {
  return value >= 10.0 * std::log10((reference.square().sum() + kMetricEps) / kMetricEps) - 1e-6;
}

EditCounts edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // cost and (S, D, I) of the best alignment of prefixes
  std::vector<std::vector<EditCounts>> d(n + 1, std::vector<EditCounts>(m + 1));
  for (std::size_t i = 1; i <= n; ++i) d[i][0].deletions = static_cast<int>(i);
  for (std::size_t j = 1; j <= m; ++j) d[0][j].insertions = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      EditCounts sub = d[i - 1][j - 1];
      if (ref[i - 1] != hyp[j - 1]) ++sub.substitutions;
      EditCounts del = d[i - 1][j];
      ++del.deletions;
      EditCounts ins = d[i][j - 1];
      ++ins.insertions;
      EditCounts best = sub;
      if (del.total() < best.total()) best = del;
      if (ins.total() < best.total()) best = ins;
      d[i][j] = best;
    }
  return d[n][m];
}

double WerBreakdown::wer() const {
  return static_cast<double>(substitutions + deletions + insertions) / reference_tokens;
}

WerBreakdown wer_optimal_perm(const std::vector<std::vector<int>>& hyps_in, const std::vector<std::vector<int>>& refs_in) {
  auto hyps = hyps_in;
  auto refs = refs_in;
  const std::size_t c = std::max(hyps.size(), refs.size());
  hyps.resize(c);
  refs.resize(c);
  int n = 0;
  for (const auto& r : refs) n += static_cast<int>(r.size());
  if (n == 0) throw std::invalid_argument("wer: no reference tokens");
  std::vector<std::vector<EditCounts>> pair(c, std::vector<EditCounts>(c));
  Eigen::MatrixXd cost(static_cast<Index>(c), static_cast<Index>(c));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      pair[i][j] = edit_distance(refs[j], hyps[i]);
      cost(static_cast<Index>(i), static_cast<Index>(j)) = pair[i][j].total();
    }
  const auto choice = best_permutation(cost);
  WerBreakdown w;
  w.assignment = choice->perm;
  w.reference_tokens = n;
  for (std::size_t i = 0; i < c; ++i) {
    const EditCounts& e = pair[i][static_cast<std::size_t>(w.assignment[i])];
    w.substitutions += e.substitutions;
    w.deletions += e.deletions;
    w.insertions += e.insertions;
  }
  return w;
}

void write_rttm(std::ostream& out, const std::string& id, const std::vector<std::vector<int>>& decisions,
                double frame_shift) {
  for (std::size_t c = 0; c < decisions.size(); ++c) {
    const auto& track = decisions[c];
    std::size_t f = 0;
    while (f < track.size()) {
      if (!track[f]) {
        ++f;
        continue;
      }
      std::size_t g = f;
      while (g < track.size() && track[g]) ++g;
      std::ostringstream line;
      line << std::fixed << std::setprecision(3) << "SPEAKER " << id << " 1 " << f * frame_shift << " "
           << (g - f) * frame_shift << " <NA> <NA> spk" << c + 1 << " <NA> <NA>\n";
      out << line.str();
      f = g;
    }
  }
}

std::map<std::string, SpeakerSegments> parse_rttm(std::istream& in) {
  std::map<std::string, std::map<std::string, std::vector<Segment>>> raw;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::string type, id, channel, speaker, na;
    double onset = 0, dur = 0;
    if (!(fields >> type)) continue;
    if (type != "SPEAKER") continue;
    if (!(fields >> id >> channel >> onset >> dur >> na >> na >> speaker)) {
      throw std::invalid_argument("rttm line " + std::to_string(number) + ": malformed SPEAKER record");
    }
    if (dur < 0 || onset < 0) throw std::invalid_argument("rttm line " + std::to_string(number) + ": negative time");
    raw[id][speaker].push_back({onset, onset + dur});
  }
  std::map<std::string, SpeakerSegments> out;
  for (auto& [id, speakers] : raw)
    for (auto& [label, segs] : speakers) out[id].push_back(std::move(segs));
  return out;
}

AggregateReport aggregate(const std::vector<ItemReport>& items) {
  AggregateReport a;
  a.items = static_cast<int>(items.size());
  double err = 0, total = 0, snr = 0, snri = 0, sd = 0;
  int n_der = 0, n_sep = 0, edits = 0, tokens = 0;
  for (const auto& it : items) {
    if (it.der) {
      err += it.der->miss + it.der->false_alarm + it.der->confusion;
      total += it.der->total;
      ++n_der;
    }
    for (std::size_t c = 0; c < it.si_snr.size(); ++c) {
      snr += it.si_snr[c];
      snri += it.si_snri[c];
      sd += it.sdr[c];
      ++n_sep;
    }
    if (it.wer) {
      edits += it.wer->substitutions + it.wer->deletions + it.wer->insertions;
      tokens += it.wer->reference_tokens;
    }
  }
  if (n_der > 0) a.der = DerBreakdown{0, 0, err, total, {}}.der();
  if (n_sep > 0) {
    a.si_snr = snr / n_sep;
    a.si_snri = snri / n_sep;
    a.sdr = sd / n_sep;
  }
  if (tokens > 0) a.wer = static_cast<double>(edits) / tokens;
  return a;
}

nlohmann::json db_json(double value, bool at_ceiling) {
  if (at_ceiling || std::isinf(value)) return value < 0 ? "-inf" : "+inf";
  return value;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return *v > 0 ? "+inf" : "-inf";
  return *v;
}

}  // namespace

nlohmann::json report_json(const std::vector<ItemReport>& items, const AggregateReport& agg) {
  nlohmann::json per_item = nlohmann::json::array();
  for (const auto& it : items) {
    nlohmann::json j;
    j["id"] = it.id;
    if (it.der) {
      j["der"] = optional_json(it.der->der());
      j["der_breakdown"] = {{"miss", it.der->miss},
                            {"false_alarm", it.der->false_alarm},
                            {"confusion", it.der->confusion},
                            {"total", it.der->total}};
    } else {
      j["der"] = nullptr;
    }
    nlohmann::json snr = nlohmann::json::array(), snri = nlohmann::json::array(), sd = nlohmann::json::array();
    for (std::size_t c = 0; c < it.si_snr.size(); ++c) {
      snr.push_back(db_json(it.si_snr[c], it.si_snr_ceiling[c]));
      snri.push_back(db_json(it.si_snri[c], it.si_snr_ceiling[c]));
      sd.push_back(db_json(it.sdr[c], it.sdr_ceiling[c]));
    }
    j["si_snr"] = snr;
    j["si_snri"] = snri;
    j["sdr"] = sd;
    if (it.wer) {
      j["wer"] = it.wer->wer();
      j["wer_breakdown"] = {{"substitutions", it.wer->substitutions},
                            {"deletions", it.wer->deletions},
                            {"insertions", it.wer->insertions},
                            {"reference_tokens", it.wer->reference_tokens},
                            {"assignment", it.wer->assignment}};
    } else {
      j["wer"] = nullptr;
    }
    j["hypotheses"] = it.hypotheses;
    if (it.asr_skipped) j["asr_skipped"] = true;
    per_item.push_back(std::move(j));
  }
  nlohmann::json out;
  out["per_item"] = std::move(per_item);
  out["aggregate"] = {{"der", optional_json(agg.der)},   {"si_snr", optional_json(agg.si_snr)},
                      {"si_snri", optional_json(agg.si_snri)}, {"sdr", optional_json(agg.sdr)},
                      {"wer", optional_json(agg.wer)},   {"items", agg.items}};
  out["notes"] = {{"sdr", "unfiltered energy ratio 10log10(|s|^2/|s_hat-s|^2), not BSS-eval SDR"},
                  {"ceiling", "\"+inf\" marks estimates equal to the reference up to eps=1e-8"}};
  return out;
}

std::string report_csv(const std::vector<ItemReport>& items) {
  std::ostringstream out;
  out << "id,der,wer";
  std::size_t speakers = 0;
  for (const auto& it : items) speakers = std::max(speakers, it.si_snr.size());
  for (std::size_t c = 0; c < speakers; ++c) out << ",si_snr_" << c + 1 << ",si_snri_" << c + 1 << ",sdr_" << c + 1;
  out << "\n";
  auto cell = [](double v, bool ceiling) -> std::string {
    if (ceiling || std::isinf(v)) return v < 0 ? "-inf" : "+inf";
    std::ostringstream s;
    s << std::setprecision(8) << v;
    return s.str();
  };
  for (const auto& it : items) {
    out << it.id << "," << (it.der ? cell(it.der->der(), false) : "") << "," << (it.wer ? cell(it.wer->wer(), false) : "");
    for (std::size_t c = 0; c < speakers; ++c) {
      if (c < it.si_snr.size()) {
        out << "," << cell(it.si_snr[c], it.si_snr_ceiling[c]) << "," << cell(it.si_snri[c], it.si_snr_ceiling[c]) << ","
            << cell(it.sdr[c], it.sdr_ceiling[c]);
      } else {
        out << ",,,";
      }
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace ume
