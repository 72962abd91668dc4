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

#include "ume/pit.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ume {

std::vector<Permutation> all_permutations(int n) {
  if (n < 1 || n > kMaxPitSpeakers) {
    throw std::invalid_argument("permutation search supports 1.." + std::to_string(kMaxPitSpeakers) +
                                " speakers, got " + std::to_string(n));
  }
  Permutation p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::vector<Permutation> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

std::optional<PitChoice> best_permutation(const Eigen::MatrixXd& pair_cost) {
  if (pair_cost.rows() != pair_cost.cols()) throw std::invalid_argument("best_permutation: cost matrix not square");
  std::optional<PitChoice> best;
  for (const auto& p : all_permutations(static_cast<int>(pair_cost.rows()))) {
    double total = 0;
    for (std::size_t c = 0; c < p.size(); ++c) total += pair_cost(static_cast<Eigen::Index>(c), p[c]);
    if (std::isnan(total)) throw NonFiniteCostError("best_permutation: NaN cost");
    if (std::isinf(total) && total > 0) continue;
    if (!best || total < best->cost) best = PitChoice{p, total};
  }
  return best;
}

bool is_identity(const Permutation& p) {
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] != static_cast<int>(i)) return false;
  return true;
}

}  // namespace ume
