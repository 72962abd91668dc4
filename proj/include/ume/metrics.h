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

// Evaluation metrics: frame-level DER with collar and median filtering,
// SI-SNR and unfiltered SDR, permutation-optimal WER, RTTM I/O and the
// evaluation report.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ume/diar.h"

namespace ume {

struct Segment {
  double start = 0;  // seconds
  double end = 0;
};

/// One segment list per speaker.
using SpeakerSegments = std::vector<std::vector<Segment>>;

SpeakerSegments segments_from_spans(const std::vector<std::vector<Span>>& spans, int sample_rate);

struct DerOptions {
  double collar = 0.0;  // seconds, each side of every reference boundary
  int median_frames = 11;
  double threshold = 0.5;
  double frame_shift = 0.008;  // seconds per frame
};

struct DerBreakdown {
  double miss = 0, false_alarm = 0, confusion = 0;  // seconds
  double total = 0;                                 // scored reference speech, seconds
  Permutation mapping;  // prediction track c is scored as reference speaker mapping[c]
  double der() const;   // +inf when there is error but no reference speech
};

/// Width-1 filtering is the identity; edges replicate the boundary value.
std::vector<int> median_filter(const std::vector<int>& track, int width);

/// Binary decisions [frames x C] after thresholding and median filtering.
std::vector<std::vector<int>> diarization_decisions(const FrameLabels& probs, double threshold, int median_frames);

/// Frame f is active when a segment covers more than half of it.
std::vector<std::vector<int>> rasterize(const SpeakerSegments& ref, Index frames, double frame_shift);

DerBreakdown der(const FrameLabels& probs, const SpeakerSegments& ref, const DerOptions& options);
/// Scores already-binarized decisions (no threshold or median filter).
DerBreakdown der_from_decisions(const std::vector<std::vector<int>>& decisions, const SpeakerSegments& ref,
                                double collar, double frame_shift);

inline constexpr double kMetricEps = 1e-8;

/// Zero-mean projection SI-SNR in dB, identical to the separation loss.
double si_snr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference);
/// 10 log10((|s|^2 + eps) / (|s_hat - s|^2 + eps)); no zero-meaning, no
/// distortion filter (not BSS-eval SDR).
double sdr(const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference);
/// True when a score equals the eps-limited maximum (perfect estimate).
bool si_snr_at_ceiling(double value, const Eigen::ArrayXd& estimate, const Eigen::ArrayXd& reference);
bool sdr_at_ceiling(double value, const Eigen::ArrayXd& reference);

struct EditCounts {
  int substitutions = 0, deletions = 0, insertions = 0;
  int total() const { return substitutions + deletions + insertions; }
};

/// Unit-cost Levenshtein alignment of hyp against ref.
EditCounts edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp);

struct WerBreakdown {
  int substitutions = 0, deletions = 0, insertions = 0, reference_tokens = 0;
  Permutation assignment;  // hypothesis c is scored against reference assignment[c]
  double wer() const;
};

/// Exhaustive assignment of hypotheses to references minimizing total edits.
WerBreakdown wer_optimal_perm(const std::vector<std::vector<int>>& hyps, const std::vector<std::vector<int>>& refs);

/// "SPEAKER <id> 1 <onset> <dur> <NA> <NA> spk<c> <NA> <NA>" per active run
/// of the binary decisions; speakers are numbered from 1.
void write_rttm(std::ostream& out, const std::string& id, const std::vector<std::vector<int>>& decisions,
                double frame_shift);
/// Speaker labels are mapped to indices in sorted label order.
std::map<std::string, SpeakerSegments> parse_rttm(std::istream& in);

struct ItemReport {
  std::string id;
  std::optional<DerBreakdown> der;
  std::vector<double> si_snr;   // per reference speaker, best permutation
  std::vector<double> si_snri;  // improvement over the mixture as estimate
  std::vector<double> sdr;
  std::vector<bool> si_snr_ceiling, sdr_ceiling;
  std::optional<WerBreakdown> wer;
  std::vector<std::vector<int>> hypotheses;
  bool asr_skipped = false;
};

struct AggregateReport {
  std::optional<double> der;  // total errors / total reference speech
  std::optional<double> si_snr, si_snri, sdr;  // means over items and speakers (ceiling items count as capped values)
  std::optional<double> wer;  // total edits / total reference tokens
  int items = 0;
};

AggregateReport aggregate(const std::vector<ItemReport>& items);

/// Scores in dB go through this: "+inf" string at the ceiling.
nlohmann::json db_json(double value, bool at_ceiling);

nlohmann::json report_json(const std::vector<ItemReport>& items, const AggregateReport& agg);
std::string report_csv(const std::vector<ItemReport>& items);

}  // namespace ume
