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

// Exhaustive permutation search for permutation-invariant losses. A
// permutation p maps estimate c to reference p[c].

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <vector>

namespace ume {

using Permutation = std::vector<int>;

inline constexpr int kMaxPitSpeakers = 4;

/// All n! permutations in lexicographic order.
std::vector<Permutation> all_permutations(int n);

struct PitChoice {
  Permutation perm;
  double cost = 0;
};

/// A cost matrix contained NaN, typically from a diverged model.
class NonFiniteCostError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Minimizes sum_c cost(c, perm[c]). Entries may be +inf to mark infeasible
/// pairings. Ties resolve to the lexicographically first permutation.
/// Returns nullopt when every permutation is infeasible; NaN entries throw
/// NonFiniteCostError.
std::optional<PitChoice> best_permutation(const Eigen::MatrixXd& pair_cost);

bool is_identity(const Permutation& p);

}  // namespace ume
