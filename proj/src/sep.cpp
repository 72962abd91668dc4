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

#include "ume/sep.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ume {

void validate(const SepConfig& c, const std::string& path) {
  if (c.kernel < 1) throw ConfigError(path + ".kernel", "must be positive");
  if (c.stride < 1 || c.stride > c.kernel) throw ConfigError(path + ".stride", "must be in [1, kernel]");
  if (c.filters < 1) throw ConfigError(path + ".filters", "must be positive");
  if (c.bottleneck < 1) throw ConfigError(path + ".bottleneck", "must be positive");
  if (c.blocks < 1) throw ConfigError(path + ".blocks", "must be >= 1");
  if (c.dilations.empty()) throw ConfigError(path + ".dilations", "must not be empty");
  for (Index d : c.dilations)
    if (d < 1) throw ConfigError(path + ".dilations", "must be positive");
  if (c.tcn_kernel < 1 || c.tcn_kernel % 2 == 0) throw ConfigError(path + ".tcn_kernel", "must be odd");
}

Index sep_frames(const SepConfig& c, Index samples) {
  return samples < c.kernel ? 0 : (samples - c.kernel) / c.stride + 1;
}

Index tcn_receptive_field(const SepConfig& c) {
  Index total = 0;
  for (Index d : c.dilations) total += (c.tcn_kernel - 1) * d;
  return 1 + c.blocks * total;
}

Index upsample_factor(Index sep, Index enc) {
  if (enc < 1) throw std::invalid_argument("upsample_factor: no encoder frames");
  // round-half-up of sep / enc in integer arithmetic
  return std::max<Index>(1, (2 * sep + enc) / (2 * enc));
}

template <typename S>
Tensor<S> upsample_to(const Tensor<S>& h, Index frames) {
  const Index r = upsample_factor(frames, h.dim(0));
  Tensor<S> up = r == 1 ? h : upsample_repeat(h, r);
  if (up.dim(0) > frames) return slice(up, 0, 0, frames);
  if (up.dim(0) < frames) {
    const Tensor<S> last = slice(up, 0, up.dim(0) - 1, up.dim(0));
    return concat<S>({up, upsample_repeat(last, frames - up.dim(0))}, 0);
  }
  return up;
}

template <typename S>
SepHead<S>::SepHead(ParameterStore<S>& store, const SepConfig& config, Index d_enc, int speakers, Rng& rng)
    : config_(config),
      speakers_(speakers),
      width_(config.filters + (config.concat_encoder ? d_enc : 0)),
      analysis_(store, "sep.analysis", 1, config.filters, config.kernel, ConvOptions{config.stride, 0, 1, 1}, rng,
                false),
      norm_(store, "sep.norm", width_, rng),
      bottleneck_(store, "sep.bottleneck", width_, config.bottleneck, rng) {
  validate(config);
  if (speakers < 1 || speakers > kMaxPitSpeakers) throw std::invalid_argument("sep: unsupported speaker count");
  for (int blk = 0; blk < config.blocks; ++blk)
    for (std::size_t i = 0; i < config.dilations.size(); ++i) {
      const Index d = config.dilations[i];
      const std::string name = "sep.tcn." + std::to_string(blk) + "." + std::to_string(i);
      layers_.push_back({Conv1d<S>(store, name + ".dilated", config.bottleneck, config.bottleneck, config.tcn_kernel,
                                   ConvOptions{1, d * (config.tcn_kernel - 1) / 2, d, 1}, rng),
                         PRelu<S>(store, name + ".prelu", rng),
                         Linear<S>(store, name + ".pointwise", config.bottleneck, config.bottleneck, rng)});
    }
  mask_act_ = PRelu<S>(store, "sep.mask.prelu", rng);
  mask_proj_ = Linear<S>(store, "sep.mask.proj", config.bottleneck, speakers * width_, rng);
  decoder_ = &store.create("sep.decoder.weight", {width_, 1, config.kernel}, Init::kXavier, rng);
  // Encoder channels start silent in the synthesis filterbank.
  decoder_->value.tail((width_ - config.filters) * config.kernel).setZero();
}

template <typename S>
Tensor<S> SepHead<S>::conv_encode(Binding<S>& b, const Tensor<S>& waveform) const {
  Tensor<S> x = waveform.rank() == 1 ? reshape(waveform, {waveform.dim(0), 1}) : waveform;
  if (x.dim(0) < config_.kernel) {
    throw ShapeError("sep.conv_encode", {waveform.shape()},
                     "input shorter than the analysis kernel (" + std::to_string(config_.kernel) + ")");
  }
  return relu(analysis_(b, x));
}

template <typename S>
Tensor<S> SepHead<S>::concat_upsample(const Tensor<S>& analysis, const Tensor<S>& h_enc) const {
  if (!config_.concat_encoder) return analysis;
  if (!h_enc.defined()) throw std::invalid_argument("sep: encoder features required for concatenation");
  return concat<S>({analysis, upsample_to(h_enc, analysis.dim(0))}, 1);
}

template <typename S>
Tensor<S> SepHead<S>::tcn(Binding<S>& b, const Tensor<S>& features) const {
  Tensor<S> e = bottleneck_(b, norm_(b, features));
  for (const auto& layer : layers_) e = add(e, layer.pointwise(b, layer.act(b, layer.dilated(b, e))));
  return e;
}

template <typename S>
std::vector<Tensor<S>> SepHead<S>::separate(Binding<S>& b, const Tensor<S>& features) const {
  if (features.rank() != 2 || features.dim(1) != width_) {
    throw ShapeError("sep.separate", {features.shape()}, "expected width " + std::to_string(width_));
  }
  const Tensor<S> m = mask_proj_(b, mask_act_(b, tcn(b, features)));
  std::vector<Tensor<S>> masks;
  for (int c = 0; c < speakers_; ++c) masks.push_back(sigmoid(slice(m, 1, c * width_, (c + 1) * width_)));
  return masks;
}

template <typename S>
std::vector<Tensor<S>> SepHead<S>::reconstruct(Binding<S>& b, const Tensor<S>& features,
                                               const std::vector<Tensor<S>>& masks, Index samples) const {
  std::vector<Tensor<S>> out;
  const Tensor<S> w = b(decoder_);
  for (const auto& mask : masks) {
    if (mask.shape() != features.shape()) throw ShapeError("sep.reconstruct", {mask.shape(), features.shape()}, "");
    Tensor<S> y = conv_transpose1d(mul(features, mask), w, Tensor<S>(), config_.stride, 0);
    if (y.dim(0) > samples) {
      y = slice(y, 0, 0, samples);
    } else if (y.dim(0) < samples) {
      y = concat<S>({y, Tensor<S>::zeros({samples - y.dim(0), 1})}, 0);
    }
    out.push_back(reshape(y, {samples}));
  }
  return out;
}

template <typename S>
SepOutput<S> SepHead<S>::forward(Binding<S>& b, const Tensor<S>& waveform, const Tensor<S>& h_enc) const {
  SepOutput<S> out;
  out.analysis = conv_encode(b, waveform);
  out.features = concat_upsample(out.analysis, h_enc);
  out.masks = separate(b, out.features);
  out.estimates = reconstruct(b, out.features, out.masks, waveform.dim(0));
  return out;
}

namespace {

struct SiSdrParts {
  Eigen::ArrayXd proj, noise;
  double a = 0, b = 0;
};

SiSdrParts si_sdr_parts(const Eigen::ArrayXd& est, const Eigen::ArrayXd& ref, double eps) {
  if (est.size() != ref.size()) {
    throw ShapeError("si_sdr", {{est.size()}, {ref.size()}}, "estimate and reference lengths differ");
  }
  const Eigen::ArrayXd e = est - est.mean();
  const Eigen::ArrayXd r = ref - ref.mean();
  const double rr = r.square().sum();
  if (!(rr > 0)) throw std::invalid_argument("si_sdr: reference is all zero");
  SiSdrParts p;
  p.proj = ((e * r).sum() / rr) * r;
  p.noise = e - p.proj;
  p.a = p.proj.square().sum() + eps;
  p.b = p.noise.square().sum() + eps;
  return p;
}

}  // namespace

double si_sdr_value(const Eigen::ArrayXd& est, const Eigen::ArrayXd& ref, double eps) {
  const SiSdrParts p = si_sdr_parts(est, ref, eps);
  return 10.0 * std::log10(p.a / p.b);
}

template <typename S>
Tensor<S> si_sdr(const Tensor<S>& estimate, const Array<S>& reference, double eps) {
  if (estimate.rank() != 1) throw ShapeError("si_sdr", {estimate.shape()}, "expected a 1-D waveform");
  const SiSdrParts p = si_sdr_parts(estimate.value().template cast<double>(), reference.template cast<double>(), eps);
  const double value = 10.0 * std::log10(p.a / p.b);
  const double k = 10.0 / std::numbers::ln10;
  Eigen::ArrayXd g = k * (2.0 * p.proj / p.a - 2.0 * p.noise / p.b);
  g -= g.mean();
  Array<S> grad = g.cast<S>();
  return Tensor<S>::from_op("si_sdr", {1}, Array<S>::Constant(1, static_cast<S>(value)), {estimate},
                            [grad](Node<S>& n) { accumulate_grad(*n.parents[0], n.grad(0) * grad); });
}

template <typename S>
Eigen::MatrixXd si_sdr_pair_costs(const std::vector<Tensor<S>>& est, const std::vector<Array<S>>& ref) {
  if (est.size() != ref.size() || est.empty()) throw std::invalid_argument("si_sdr_pit_loss: speaker counts differ");
  const Index c = static_cast<Index>(est.size());
  Eigen::MatrixXd cost(c, c);
  for (Index i = 0; i < c; ++i)
    for (Index j = 0; j < c; ++j)
      cost(i, j) = -si_sdr_value(est[i].value().template cast<double>(), ref[j].template cast<double>());
  return cost;
}

template <typename S>
SepPitLoss<S> si_sdr_pit_loss(const std::vector<Tensor<S>>& est, const std::vector<Array<S>>& ref) {
  const auto choice = best_permutation(si_sdr_pair_costs(est, ref));
  SepPitLoss<S> out;
  out.perm = choice->perm;
  for (std::size_t c = 0; c < est.size(); ++c) {
    const Tensor<S> term = scale(si_sdr(est[c], ref[out.perm[c]]), S(-1));
    out.loss = out.loss.defined() ? add(out.loss, term) : term;
  }
  return out;
}

#define UME_INSTANTIATE(S)                                                                                 \
  template Tensor<S> upsample_to<S>(const Tensor<S>&, Index);                                              \
  template class SepHead<S>;                                                                               \
  template Tensor<S> si_sdr<S>(const Tensor<S>&, const Array<S>&, double);                                 \
  template Eigen::MatrixXd si_sdr_pair_costs<S>(const std::vector<Tensor<S>>&, const std::vector<Array<S>>&); \
  template SepPitLoss<S> si_sdr_pit_loss<S>(const std::vector<Tensor<S>>&, const std::vector<Array<S>>&);

UME_INSTANTIATE(float)
UME_INSTANTIATE(double)

}  // namespace ume
