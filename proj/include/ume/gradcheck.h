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

#include <functional>
#include <string>
#include <vector>

#include "ume/param.h"

namespace ume {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  Index checked = 0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
  std::vector<std::string> failing() const;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double abs_floor = 1e-6;
  // Entries probed per parameter; <= 0 probes all of them.
  Index max_entries = -1;
  std::uint64_t seed = 0;
};

using LossBuilder = std::function<Tensor<double>(Binding<double>&)>;

/// Compares reverse-mode gradients of `builder` against central
/// differences (f(p + eps) - f(p - eps)) / (2 eps) for every parameter in
/// `store`. Throws std::runtime_error if two evaluations at the same point
/// disagree.
GradCheckReport grad_check(ParameterStore<double>& store, const LossBuilder& builder,
                           const GradCheckOptions& options = {});

}  // namespace ume
