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

// Discrete exponential mechanism over a grid net of the centered ball.

#ifndef DPNC_PACKING_H_
#define DPNC_PACKING_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dpnc/objective.h"
#include "dpnc/privacy.h"
#include "dpnc/random.h"

namespace dpnc {

inline constexpr int kMaxPackingDim = 4;
inline constexpr int64_t kMaxPackingCenters = 10'000'000;

struct Packing {
  int dim = 0;
  double diameter = 0;
  double radius = 0;  // requested covering radius r
  double spacing = 0;
  // Proven covering radius of the construction, <= radius.
  double covering_radius_cert = 0;
  std::vector<Vector> centers;
};

// Axis-aligned grid of spacing 2r / sqrt(d) through the origin. Grid points
// inside the ball are kept; a grid point outside the ball is kept, projected
// onto the sphere, when its cell still reaches into the ball. With r >= D/2
// the net is the single center.
absl::StatusOr<Packing> BuildPacking(int dim, double diameter, double r);

// Default radius D d / (eps n), clamped to D / 2.
double DefaultPackingRadius(double diameter, int dim, double epsilon,
                            int64_t n);

// Header "# dim=..,diameter=..,radius=..,spacing=..,cert=..,count=.." then
// one center per line.
std::string PackingToCsv(const Packing& packing);
absl::StatusOr<Packing> PackingFromCsv(absl::string_view text);

// Distance from x to its nearest center.
double NearestCenterDistance(const Packing& packing, const Vector& x);

// Normalized selection probabilities ~ exp(-eps n F / (2 G D)), computed
// after subtracting the smallest value.
absl::StatusOr<std::vector<double>> DiscreteEmProbabilities(
    const std::vector<double>& risks, double epsilon, int64_t n,
    double lipschitz, double diameter);

struct DiscreteSelection {
  int64_t index = 0;
  Vector point;
  // Full probability vector, kept only for nets of at most 1000 centers.
  std::vector<double> probabilities;
};

// Samples a center with probability ~ exp(-eps n F_D(p) / (2 G D)). Charges
// (eps, 0) as "em/packing" when a ledger is given.
absl::StatusOr<DiscreteSelection> DiscreteEmSelect(
    const Packing& packing, const Problem& problem, const Dataset& dataset,
    double epsilon, double lipschitz, double diameter, Rng& rng,
    Ledger* ledger = nullptr);

struct PackingRiskReport {
  double empirical_excess = 0;
  double population_excess = 0;
};

// Excess of `selected` over the grid-search minima of F_D and F_P on the
// ball; d <= 2.
absl::StatusOr<PackingRiskReport> ComputePackingRisk(const Vector& selected,
                                                     const Problem& problem,
                                                     const Dataset& dataset,
                                                     double diameter);

}  // namespace dpnc

#endif  // DPNC_PACKING_H_
