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

#include "ume/asr.h"

#include <cmath>
#include <limits>

namespace ume {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

using RowArrayXXd = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CtcLattice {
  std::vector<int> labels;  // blank-augmented
  RowArrayXXd alpha, beta;  // [T x S]; beta excludes the emission at t
  double log_likelihood = kNegInf;
};

CtcLattice ctc_lattice(const Eigen::Ref<const RowArrayXXd>& lp, std::span<const int> target, bool with_beta) {
  const Index t_len = lp.rows(), classes = lp.cols();
  CtcLattice lat;
  lat.labels.push_back(0);
  for (int w : target) {
    if (w < 1 || w >= classes) {
      throw std::invalid_argument("ctc_loss: token " + std::to_string(w) + " outside 1.." +
                                  std::to_string(classes - 1));
    }
    lat.labels.push_back(w);
    lat.labels.push_back(0);
  }
  const Index s_len = static_cast<Index>(lat.labels.size());
  const auto& l = lat.labels;
  auto skip_ok = [&](Index s) { return s >= 2 && l[s] != 0 && l[s] != l[s - 2]; };

  lat.alpha = RowArrayXXd::Constant(t_len, s_len, kNegInf);
  lat.alpha(0, 0) = lp(0, 0);
  if (s_len > 1) lat.alpha(0, 1) = lp(0, l[1]);
  for (Index t = 1; t < t_len; ++t)
    for (Index s = 0; s < s_len; ++s) {
      double a = lat.alpha(t - 1, s);
      if (s >= 1) a = lse(a, lat.alpha(t - 1, s - 1));
      if (skip_ok(s)) a = lse(a, lat.alpha(t - 1, s - 2));
      lat.alpha(t, s) = a == kNegInf ? kNegInf : a + lp(t, l[s]);
    }
  lat.log_likelihood = lat.alpha(t_len - 1, s_len - 1);
  if (s_len > 1) lat.log_likelihood = lse(lat.log_likelihood, lat.alpha(t_len - 1, s_len - 2));
  if (!with_beta) return lat;

  lat.beta = RowArrayXXd::Constant(t_len, s_len, kNegInf);
  lat.beta(t_len - 1, s_len - 1) = 0;
  if (s_len > 1) lat.beta(t_len - 1, s_len - 2) = 0;
  for (Index t = t_len - 2; t >= 0; --t)
    for (Index s = 0; s < s_len; ++s) {
      double b = lat.beta(t + 1, s) + lp(t + 1, l[s]);
      if (s + 1 < s_len) b = lse(b, lat.beta(t + 1, s + 1) + lp(t + 1, l[s + 1]));
      if (s + 2 < s_len && skip_ok(s + 2)) b = lse(b, lat.beta(t + 1, s + 2) + lp(t + 1, l[s + 2]));
      lat.beta(t, s) = b;
    }
  return lat;
}

}  // namespace

void validate(const AsrConfig& c, const std::string& path) {
  if (c.d_model < 1) throw ConfigError(path + ".d_model", "must be positive");
  if (c.heads < 1 || c.d_model % c.heads != 0) throw ConfigError(path + ".heads", "d_model must be divisible by heads");
  if (c.ff_dim < 1) throw ConfigError(path + ".ff_dim", "must be positive");
  if (c.encoder_blocks < 0) throw ConfigError(path + ".encoder_blocks", "must be >= 0");
  if (c.decoder_blocks < 0) throw ConfigError(path + ".decoder_blocks", "must be >= 0");
  if (c.vocab_size < 1) throw ConfigError(path + ".vocab_size", "must be >= 1");
  if (!(c.ctc_weight >= 0 && c.ctc_weight <= 1)) throw ConfigError(path + ".ctc_weight", "must be in [0, 1]");
}

Index asr_frames(Index enc_frames) { return enc_frames < kAsrStride ? 0 : (enc_frames - kAsrStride) / kAsrStride + 1; }

Index ctc_min_frames(std::span<const int> target) {
  Index n = static_cast<Index>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

double ctc_loss_value(const Eigen::Ref<const RowArrayXXd>& lp, std::span<const int> target) {
  if (lp.rows() == 0) throw std::invalid_argument("ctc_loss: empty log_probs");
  if (lp.rows() < ctc_min_frames(target)) return std::numeric_limits<double>::infinity();
  return -ctc_lattice(lp, target, false).log_likelihood;
}

template <typename S>
Tensor<S> ctc_loss(const Tensor<S>& log_probs, std::span<const int> target) {
  if (log_probs.rank() != 2 || log_probs.dim(0) == 0) {
    throw ShapeError("ctc_loss", {log_probs.shape()}, "expected non-empty [frames x classes]");
  }
  const Index t_len = log_probs.dim(0), classes = log_probs.dim(1);
  if (t_len < ctc_min_frames(target)) {
    throw CtcInfeasible("ctc_loss: " + std::to_string(t_len) + " frames cannot align a target needing " +
                        std::to_string(ctc_min_frames(target)));
  }
  const RowArrayXXd lp = log_probs.matrix().template cast<double>().array();
  CtcLattice lat = ctc_lattice(lp, target, true);
  if (lat.log_likelihood == kNegInf) throw CtcInfeasible("ctc_loss: target has zero probability");
  Array<S> grad = Array<S>::Zero(t_len * classes);
  for (Index t = 0; t < t_len; ++t)
    for (Index s = 0; s < static_cast<Index>(lat.labels.size()); ++s) {
      const double v = lat.alpha(t, s) + lat.beta(t, s);
      if (v == kNegInf) continue;
      grad(t * classes + lat.labels[s]) -= static_cast<S>(std::exp(v - lat.log_likelihood));
    }
  return Tensor<S>::from_op("ctc_loss", {1}, Array<S>::Constant(1, static_cast<S>(-lat.log_likelihood)), {log_probs},
                            [grad](Node<S>& n) { accumulate_grad(*n.parents[0], n.grad(0) * grad); });
}

std::vector<int> greedy_decode(
    const Eigen::Ref<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>& scores,
    std::vector<float>* token_scores) {
  std::vector<int> out;
  if (token_scores) token_scores->clear();
  int prev = -1;
  for (Index t = 0; t < scores.rows(); ++t) {
    Index best = 0;
    const float value = scores.row(t).maxCoeff(&best);
    const int k = static_cast<int>(best);
    if (k != prev && k != 0) {
      out.push_back(k);
      if (token_scores) token_scores->push_back(value);
    } else if (k == prev && k != 0 && token_scores) {
      token_scores->back() = std::max(token_scores->back(), value);
    }
    prev = k;
  }
  return out;
}

template <typename S>
AsrHead<S>::AsrHead(ParameterStore<S>& store, const AsrConfig& config, Index d_enc, int speakers, Rng& rng)
    : config_(config) {
  validate(config);
  if (speakers < 1 || speakers > kMaxPitSpeakers) throw std::invalid_argument("asr: unsupported speaker count");
  const Index d = config.d_model;
  for (int c = 0; c < speakers; ++c) {
    const std::string name = "asr.spk" + std::to_string(c + 1);
    SpeakerEncoder<S> enc;
    enc.conv = Conv1d<S>(store, name + ".conv", d_enc, d, kAsrStride, ConvOptions{kAsrStride, 0, 1, 1}, rng);
    for (int i = 0; i < config.encoder_blocks; ++i) {
      enc.blocks.emplace_back(store, name + ".blocks." + std::to_string(i), d, config.heads, config.ff_dim, rng);
    }
    encoders_.push_back(std::move(enc));
  }
  ctc_ = Linear<S>(store, "asr.ctc", d, config.vocab_size + 1, rng);
  embed_ = &store.create("asr.decoder.embed", {config.vocab_size + 3, d}, Init::kXavier, rng);
  for (int i = 0; i < config.decoder_blocks; ++i) {
    const std::string name = "asr.decoder.blocks." + std::to_string(i);
    decoder_.push_back({LayerNorm<S>(store, name + ".norm1", d, rng), LayerNorm<S>(store, name + ".norm2", d, rng),
                        LayerNorm<S>(store, name + ".norm3", d, rng),
                        SelfAttention<S>(store, name + ".self_attn", d, config.heads, rng),
                        SelfAttention<S>(store, name + ".cross_attn", d, config.heads, rng),
                        FeedForward<S>(store, name + ".ff", d, config.ff_dim, rng)});
  }
  out_norm_ = LayerNorm<S>(store, "asr.decoder.out_norm", d, rng);
  out_ = Linear<S>(store, "asr.decoder.out", d, config.vocab_size + 1, rng);
}

template <typename S>
std::vector<Tensor<S>> AsrHead<S>::speaker_encode(Binding<S>& b, const Tensor<S>& h_enc) const {
  if (asr_frames(h_enc.dim(0)) == 0) {
    throw ShapeError("asr.speaker_encode", {h_enc.shape()}, "fewer than 4 encoder frames");
  }
  std::vector<Tensor<S>> out;
  for (const auto& enc : encoders_) {
    Tensor<S> h = add_positional_encoding(enc.conv(b, h_enc));
    for (const auto& block : enc.blocks) h = block(b, h);
    out.push_back(h);
  }
  return out;
}

template <typename S>
Tensor<S> AsrHead<S>::ctc_log_probs(Binding<S>& b, const Tensor<S>& hidden) const {
  return log_softmax(ctc_(b, hidden), 1);
}

template <typename S>
Tensor<S> AsrHead<S>::decoder_log_probs(Binding<S>& b, const Tensor<S>& hidden, std::span<const int> target) const {
  std::vector<Index> ids{sos()};
  for (int w : target) {
    if (w < 1 || w > config_.vocab_size) throw std::invalid_argument("asr: token id " + std::to_string(w) + " out of range");
    ids.push_back(w);
  }
  Tensor<S> x = add_positional_encoding(embedding(b(embed_), std::span<const Index>(ids)));
  for (const auto& blk : decoder_) {
    x = add(x, blk.self_attn(b, blk.norm1(b, x), true));
    x = add(x, blk.cross_attn.cross(b, blk.norm2(b, x), hidden));
    x = add(x, blk.ff(b, blk.norm3(b, x)));
  }
  return log_softmax(out_(b, out_norm_(b, x)), 1);
}

template <typename S>
Tensor<S> AsrHead<S>::attention_loss(Binding<S>& b, const Tensor<S>& hidden, std::span<const int> target) const {
  if (target.empty()) throw std::invalid_argument("attention_loss: empty target");
  std::vector<Index> classes;
  for (int w : target) classes.push_back(w - 1);
  classes.push_back(config_.vocab_size);
  return nll(decoder_log_probs(b, hidden, target), std::span<const Index>(classes));
}

template <typename S>
AsrPitLoss<S> AsrHead<S>::pit_loss(Binding<S>& b, const std::vector<Tensor<S>>& hidden,
                                   const std::vector<std::vector<int>>& targets) const {
  const Index c = static_cast<Index>(hidden.size());
  if (static_cast<Index>(targets.size()) != c || c == 0) throw std::invalid_argument("asr_pit_loss: speaker counts differ");
  std::vector<Tensor<S>> lp;
  std::vector<RowArrayXXd> lpv;
  for (const auto& h : hidden) {
    lp.push_back(ctc_log_probs(b, h));
    lpv.push_back(lp.back().matrix().template cast<double>().array());
  }
  Eigen::MatrixXd ctc(c, c), att = Eigen::MatrixXd::Zero(c, c);
  for (Index i = 0; i < c; ++i)
    for (Index j = 0; j < c; ++j) ctc(i, j) = ctc_loss_value(lpv[i], targets[j]);
  const double w = config_.ctc_weight;
  Eigen::MatrixXd select = ctc;
  if (config_.selection == AsrSelection::kCombined) {
    for (Index i = 0; i < c; ++i)
      for (Index j = 0; j < c; ++j)
        if (std::isfinite(ctc(i, j))) att(i, j) = attention_loss(b, hidden[i], targets[j]).item();
    select = w * ctc + (1 - w) * att;
  }
  AsrPitLoss<S> out;
  const auto choice = best_permutation(select);
  if (!choice) {
    out.skipped = true;
    return out;
  }
  out.perm = choice->perm;
  for (Index i = 0; i < c; ++i) {
    const auto& target = targets[out.perm[i]];
    const Tensor<S> lc = ctc_loss(lp[i], target);
    const Tensor<S> la = attention_loss(b, hidden[i], target);
    out.ctc.push_back(static_cast<double>(lc.item()));
    out.att.push_back(static_cast<double>(la.item()));
    const Tensor<S> term = add(scale(lc, static_cast<S>(w)), scale(la, static_cast<S>(1 - w)));
    out.loss = out.loss.defined() ? add(out.loss, term) : term;
  }
  return out;
}

#define UME_INSTANTIATE(S)                                                      \
  template Tensor<S> ctc_loss<S>(const Tensor<S>&, std::span<const int>);      \
  template class AsrHead<S>;

UME_INSTANTIATE(float)
UME_INSTANTIATE(double)

}  // namespace ume
