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

#include "ume/optim.h"

#include <cmath>
#include <stdexcept>

namespace ume {

template <typename S>
void adamw_step(std::span<Parameter<S>* const> params, const AdamWOptions& opt) {
  for (Parameter<S>* p : params) {
    if (p->grad.size() != p->value.size()) {
      throw std::invalid_argument("adamw_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter<S>* p : params) {
    p->step += 1;
    const double t = static_cast<double>(p->step);
    const S b1 = static_cast<S>(opt.beta1), b2 = static_cast<S>(opt.beta2);
    p->adam_m = b1 * p->adam_m + (S(1) - b1) * p->grad;
    p->adam_v = b2 * p->adam_v + (S(1) - b2) * p->grad.square();
    const S c1 = static_cast<S>(1.0 - std::pow(opt.beta1, t));
    const S c2 = static_cast<S>(1.0 - std::pow(opt.beta2, t));
    const S lr = static_cast<S>(opt.lr);
    p->value *= S(1) - lr * static_cast<S>(opt.weight_decay);
    p->value -= lr * (p->adam_m / c1) / ((p->adam_v / c2).sqrt() + static_cast<S>(opt.eps));
  }
}

double lr_schedule(long step, double peak, long warmup) {
  if (warmup <= 0) return peak;
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * std::sqrt(static_cast<double>(warmup) / static_cast<double>(step));
}

template void adamw_step(std::span<Parameter<float>* const>, const AdamWOptions&);
template void adamw_step(std::span<Parameter<double>* const>, const AdamWOptions&);

}  // namespace ume
