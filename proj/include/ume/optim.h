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

#include <span>

#include "ume/param.h"

namespace ume {

struct AdamWOptions {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
};

/// One decoupled-weight-decay Adam update with bias correction:
///   theta <- theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps).
/// Gradients are left untouched. A parameter without a gradient array is
/// an error that names it.
template <typename Scalar>
void adamw_step(std::span<Parameter<Scalar>* const> params, const AdamWOptions& opt);

/// Linear warmup to `peak` over `warmup` steps, then peak * sqrt(warmup / step).
double lr_schedule(long step, double peak, long warmup);

}  // namespace ume
