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

#include "ume/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ume {

std::vector<std::string> GradCheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (!e.pass) out.push_back(e.name);
  return out;
}

namespace {

double evaluate(const LossBuilder& builder) {
  Binding<double> binding;
  return builder(binding).item();
}

}  // namespace

GradCheckReport grad_check(ParameterStore<double>& store, const LossBuilder& builder,
                           const GradCheckOptions& options) {
  if (options.eps <= 0) throw std::invalid_argument("grad_check: eps must be positive");
  store.zero_grad();
  double f0 = 0;
  {
    Binding<double> binding;
    Tensor<double> loss = builder(binding);
    f0 = loss.item();
    backward(loss);
    binding.flush();
  }
  const double f1 = evaluate(builder);
  if (!(f0 == f1 || (std::isnan(f0) && std::isnan(f1)))) {
    throw std::runtime_error("grad_check: builder is not deterministic (" + std::to_string(f0) +
                             " vs " + std::to_string(f1) + ")");
  }

  Rng rng(options.seed, 0x67c);
  GradCheckReport report;
  for (Parameter<double>* p : store.all()) {
    GradCheckEntry entry{p->name};
    std::vector<Index> idx(static_cast<std::size_t>(p->value.size()));
    std::iota(idx.begin(), idx.end(), Index{0});
    if (options.max_entries > 0 && static_cast<Index>(idx.size()) > options.max_entries) {
      for (Index i = 0; i < options.max_entries; ++i) {
        const auto j = rng.uniform_int(i, static_cast<Index>(idx.size()) - 1);
        std::swap(idx[i], idx[j]);
      }
      idx.resize(static_cast<std::size_t>(options.max_entries));
    }
    for (Index i : idx) {
      const double saved = p->value(i);
      p->value(i) = saved + options.eps;
      const double up = evaluate(builder);
      p->value(i) = saved - options.eps;
      const double down = evaluate(builder);
      p->value(i) = saved;
      const double numeric = (up - down) / (2 * options.eps);
      const double analytic = p->grad(i);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      entry.max_rel_error = std::max(entry.max_rel_error, std::isnan(rel) ? INFINITY : rel);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_error < options.tol;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace ume
