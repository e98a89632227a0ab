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

#include "dpnc/privacy.h"

#include <cmath>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace dpnc {
namespace {

// Above this exponent exp() leaves the double range.
constexpr double kMaxExponent = 700.0;

}  // namespace

absl::Status Budget::Validate() const {
  if (!(epsilon >= 0) || !(delta >= 0 && delta <= 1)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "budget needs epsilon >= 0 and delta in [0, 1], got (%g, %g)", epsilon,
        delta));
  }
  return absl::OkStatus();
}

absl::StatusOr<double> LaplaceInverseCdf(double u, double scale) {
  if (!(u > 0 && u < 1)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("Laplace quantile needs u in (0, 1), got %g", u));
  }
  if (!(scale > 0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("Laplace scale must be positive, got %g", scale));
  }
  const double centered = u - 0.5;
  if (centered == 0) return 0.0;
  const double magnitude = -scale * std::log1p(-2 * std::abs(centered));
  return centered > 0 ? magnitude : -magnitude;
}

absl::StatusOr<double> GaussianSigma(double sensitivity, double epsilon,
                                     double delta) {
  if (!(sensitivity > 0) || !(epsilon > 0 && epsilon < 1) ||
      !(delta > 0 && delta < 1)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "Gaussian calibration needs sensitivity > 0, epsilon in (0, 1), "
        "delta in (0, 1); got (%g, %g, %g)",
        sensitivity, epsilon, delta));
  }
  return sensitivity * std::sqrt(2 * std::log(1.25 / delta)) / epsilon;
}

absl::StatusOr<Budget> ComposeAdvanced(const Budget& total, int64_t k) {
  if (k < 1) {
    return absl::InvalidArgumentError("advanced composition needs k >= 1");
  }
  if (!(total.delta > 0 && total.delta < 1) || !(total.epsilon > 0)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "advanced composition needs epsilon > 0 and delta in (0, 1), got "
        "(%g, %g)",
        total.epsilon, total.delta));
  }
  if (total.epsilon > 0.9) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "advanced composition split only holds for epsilon <= 0.9, got %g",
        total.epsilon));
  }
  const double kd = static_cast<double>(k);
  return Budget{
      .epsilon =
          total.epsilon / (2 * std::sqrt(2 * kd * std::log(2 / total.delta))),
      .delta = total.delta / (2 * kd)};
}

double LsiDpEpsilon(double lipschitz, double beta, int64_t n, double c_lsi,
                    double delta) {
  return 2 * (lipschitz * beta / static_cast<double>(n)) * std::sqrt(c_lsi) *
         std::sqrt(1 + 2 * std::log(1 / delta));
}

absl::StatusOr<double> StroockClsi(double beta, double mu, double lipschitz,
                                   double diameter) {
  if (!(beta > 0 && mu > 0 && lipschitz >= 0 && diameter >= 0)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "Stroock bound needs beta, mu > 0 and G, D >= 0; got (%g, %g, %g, %g)",
        beta, mu, lipschitz, diameter));
  }
  const double exponent = beta * lipschitz * diameter;
  if (exponent > kMaxExponent) {
    return absl::OutOfRangeError(absl::StrFormat(
        "log-Sobolev constant astronomically large: beta*G*D = %g exceeds %g",
        exponent, kMaxExponent));
  }
  return std::exp(exponent) / (beta * mu);
}

const char* CompositionName(Composition composition) {
  switch (composition) {
    case Composition::kBasic:
      return "basic";
    case Composition::kAdvanced:
      return "advanced";
    case Composition::kParallel:
      return "parallel";
  }
  return "unknown";
}

absl::Status Ledger::CheckFits(Budget extra) const {
  if (!strict_) return absl::OkStatus();
  const Budget total = Total();
  const double eps = total.epsilon + extra.epsilon;
  const double delta = total.delta + extra.delta;
  if (eps > target_.epsilon || delta > target_.delta) {
    return absl::ResourceExhaustedError(absl::StrFormat(
        "privacy budget exceeded: charge would bring total to (%.17g, %.17g) "
        "against target (%.17g, %.17g)",
        eps, delta, target_.epsilon, target_.delta));
  }
  return absl::OkStatus();
}

absl::Status Ledger::Charge(const std::string& label, double epsilon,
                            double delta) {
  if (!(epsilon >= 0 && delta >= 0)) {
    return absl::InvalidArgumentError("mechanism cost must be nonnegative");
  }
  if (absl::Status s = CheckFits({epsilon, delta}); !s.ok()) return s;
  for (MechanismCost& entry : entries_) {
    if (entry.composition == Composition::kBasic && entry.label == label &&
        entry.epsilon == epsilon && entry.delta == delta) {
      ++entry.count;
      return absl::OkStatus();
    }
  }
  MechanismCost entry;
  entry.label = label;
  entry.epsilon = epsilon;
  entry.delta = delta;
  entry.count = 1;
  entries_.push_back(std::move(entry));
  return absl::OkStatus();
}

absl::StatusOr<Budget> Ledger::Reserve(const std::string& label, Budget group,
                                       int64_t max_accesses,
                                       Composition composition) {
  if (composition == Composition::kBasic) {
    return absl::InvalidArgumentError("basic costs are charged, not reserved");
  }
  if (max_accesses < 1) {
    return absl::InvalidArgumentError("reservation needs at least one access");
  }
  for (const MechanismCost& entry : entries_) {
    if (entry.label == label) {
      return absl::AlreadyExistsError(
          absl::StrCat("ledger label '", label, "' already in use"));
    }
  }
  Budget per_access = group;
  if (composition == Composition::kAdvanced) {
    absl::StatusOr<Budget> split = ComposeAdvanced(group, max_accesses);
    if (!split.ok()) return split.status();
    per_access = *split;
  }
  if (absl::Status s = CheckFits(group); !s.ok()) return s;
  entries_.push_back(MechanismCost{.label = label,
                                   .epsilon = per_access.epsilon,
                                   .delta = per_access.delta,
                                   .count = 0,
                                   .composition = composition,
                                   .max_count = max_accesses,
                                   .reserved = group});
  return per_access;
}

absl::Status Ledger::Draw(const std::string& label) {
  for (MechanismCost& entry : entries_) {
    if (entry.label != label || entry.composition == Composition::kBasic) {
      continue;
    }
    if (strict_ && entry.count >= entry.max_count) {
      return absl::ResourceExhaustedError(absl::StrFormat(
          "reservation '%s' allows %d accesses; access %d refused", label,
          entry.max_count, entry.count + 1));
    }
    ++entry.count;
    return absl::OkStatus();
  }
  return absl::NotFoundError(absl::StrCat("no reservation named '", label, "'"));
}

Budget Ledger::Total() const {
  Budget total;
  for (const MechanismCost& entry : entries_) {
    if (entry.composition == Composition::kBasic) {
      total.epsilon += entry.epsilon * static_cast<double>(entry.count);
      total.delta += entry.delta * static_cast<double>(entry.count);
    } else {
      total.epsilon += entry.reserved.epsilon;
      total.delta += entry.reserved.delta;
    }
  }
  return total;
}

int64_t Ledger::CountOf(const std::string& label) const {
  int64_t count = 0;
  for (const MechanismCost& entry : entries_) {
    if (entry.label == label) count += entry.count;
  }
  return count;
}

std::optional<Budget> Ledger::PerAccess(const std::string& label) const {
  for (const MechanismCost& entry : entries_) {
    if (entry.label == label) return Budget{entry.epsilon, entry.delta};
  }
  return std::nullopt;
}

nlohmann::json Ledger::ToJson() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const MechanismCost& e : entries_) {
    nlohmann::json j = {{"label", e.label},
                        {"epsilon", e.epsilon},
                        {"delta", e.delta},
                        {"count", e.count},
                        {"composition", CompositionName(e.composition)}};
    if (e.composition != Composition::kBasic) {
      j["max_count"] = e.max_count;
      j["reserved_epsilon"] = e.reserved.epsilon;
      j["reserved_delta"] = e.reserved.delta;
    }
    entries.push_back(std::move(j));
  }
  const Budget total = Total();
  return {{"entries", std::move(entries)},
          {"total_epsilon", total.epsilon},
          {"total_delta", total.delta},
          {"target_epsilon", target_.epsilon},
          {"target_delta", target_.delta},
          {"strict", strict_}};
}

}  // namespace dpnc
