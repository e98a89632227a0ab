//
// Copyright 2026 The dpnc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Mechanism calibration and (epsilon, delta) bookkeeping. All logarithms are
// natural.

#ifndef DPNC_PRIVACY_H_
#define DPNC_PRIVACY_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "nlohmann/json.hpp"

namespace dpnc {

struct Budget {
  double epsilon = 0;
  double delta = 0;

  absl::Status Validate() const;
};

// u-quantile of Lap(scale): sign(u - 1/2) * (-scale) * ln(1 - 2|u - 1/2|).
absl::StatusOr<double> LaplaceInverseCdf(double u, double scale);

// Classical Gaussian-mechanism calibration
//   sigma = sensitivity * sqrt(2 ln(1.25 / delta)) / epsilon,
// valid for epsilon in (0, 1).
absl::StatusOr<double> GaussianSigma(double sensitivity, double epsilon,
                                     double delta);

// Per-access budget that makes k adaptive accesses (total.epsilon,
// total.delta)-DP under advanced composition:
//   (eps / (2 sqrt(2 k ln(2 / delta))), delta / (2k)).
// The split is only valid for eps <= 0.9.
absl::StatusOr<Budget> ComposeAdvanced(const Budget& total, int64_t k);

// Privacy of sampling from exp(-beta F_D - r) when the density satisfies a
// log-Sobolev inequality with constant c_lsi:
//   eps = 2 (G beta / n) sqrt(c_lsi) sqrt(1 + 2 ln(1 / delta)).
double LsiDpEpsilon(double lipschitz, double beta, int64_t n, double c_lsi,
                    double delta);

// Log-Sobolev constant of exp(-beta (F + mu |x|^2 / 2)) on a domain where F
// oscillates by at most G * D: the Gaussian's 1 / (beta mu), inflated by the
// density-ratio range exp(beta G D).
absl::StatusOr<double> StroockClsi(double beta, double mu, double lipschitz,
                                   double diameter);

enum class Composition {
  // Every access costs (epsilon, delta); totals add.
  kBasic,
  // Up to max_count accesses at the advanced-composition split; the group as
  // a whole costs its reserved budget.
  kAdvanced,
  // Accesses touch disjoint data; the group costs its reserved budget once.
  kParallel,
};

struct MechanismCost {
  std::string label;
  double epsilon = 0;  // per access
  double delta = 0;    // per access
  int64_t count = 0;
  Composition composition = Composition::kBasic;
  // Reservation fields, unused for kBasic.
  int64_t max_count = 0;
  Budget reserved;
};

// Append-only record of every mechanism invocation. Totals compose groups by
// basic composition. In strict mode any charge that would push the total past
// the target, or any draw beyond a reservation, fails with
// RESOURCE_EXHAUSTED and is not recorded.
class Ledger {
 public:
  explicit Ledger(Budget target, bool strict = true)
      : target_(target), strict_(strict) {}

  // One basic-composition access. Repeated charges with the same label and
  // cost are merged into one entry.
  absl::Status Charge(const std::string& label, double epsilon, double delta);

  // Reserves `group` for up to `max_accesses` accesses and returns the
  // per-access budget each access may assume.
  absl::StatusOr<Budget> Reserve(const std::string& label, Budget group,
                                 int64_t max_accesses,
                                 Composition composition);

  // Records one access against a reservation.
  absl::Status Draw(const std::string& label);

  // Basic-composition total over all entries; reservations count in full.
  Budget Total() const;
  const Budget& target() const { return target_; }
  bool strict() const { return strict_; }
  const std::vector<MechanismCost>& entries() const { return entries_; }
  int64_t CountOf(const std::string& label) const;
  // Per-access cost recorded under `label`, if any.
  std::optional<Budget> PerAccess(const std::string& label) const;

  nlohmann::json ToJson() const;

 private:
  absl::Status CheckFits(Budget extra) const;

  Budget target_;
  bool strict_;
  std::vector<MechanismCost> entries_;
};

const char* CompositionName(Composition composition);

}  // namespace dpnc

#endif  // DPNC_PRIVACY_H_
