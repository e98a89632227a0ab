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

#include "dpnc/packing.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace dpnc {
namespace {

constexpr double kBoundaryTolerance = 1e-12;
constexpr size_t kAuditLimit = 1000;

// Distance from the origin to the axis-aligned cube of side `side` centered
// at `g`.
double DistanceToCell(const Vector& g, double side) {
  double sq = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    const double gap = std::max(0.0, std::abs(g(i)) - side / 2);
    sq += gap * gap;
  }
  return std::sqrt(sq);
}

}  // namespace

absl::StatusOr<Packing> BuildPacking(int dim, double diameter, double r) {
  if (dim < 1 || dim > kMaxPackingDim) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "packing supports 1 <= d <= %d, got %d", kMaxPackingDim, dim));
  }
  const double radius = diameter / 2;
  if (!(diameter > 0) || !(r > 0) || r > radius * (1 + kBoundaryTolerance)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "packing radius must lie in (0, D/2]; got r = %g, D = %g", r,
        diameter));
  }
  Packing packing;
  packing.dim = dim;
  packing.diameter = diameter;
  packing.radius = r;
  if (r >= radius * (1 - kBoundaryTolerance)) {
    packing.spacing = diameter;
    packing.covering_radius_cert = radius;
    packing.centers.push_back(Vector::Zero(dim));
    return packing;
  }
  const double s = 2 * r / std::sqrt(static_cast<double>(dim));
  packing.spacing = s;
  packing.covering_radius_cert = s * std::sqrt(static_cast<double>(dim)) / 2;
  const int64_t k_max = static_cast<int64_t>(std::floor((radius + s / 2) / s));
  const int64_t side = 2 * k_max + 1;
  double box = 1;
  for (int i = 0; i < dim; ++i) box *= static_cast<double>(side);
  // The ball holds at most about half of the box; refuse obviously huge nets
  // before enumerating.
  if (box > 4.0 * kMaxPackingCenters) {
    return absl::ResourceExhaustedError(absl::StrFormat(
        "packing would need about %g centers (cap %d)", box,
        kMaxPackingCenters));
  }
  std::vector<int64_t> index(dim, -k_max);
  Vector g(dim);
  while (true) {
    for (int i = 0; i < dim; ++i) g(i) = static_cast<double>(index[i]) * s;
    const double norm = g.norm();
    if (norm <= radius * (1 + kBoundaryTolerance)) {
      packing.centers.push_back(g);
    } else if (DistanceToCell(g, s) < radius * (1 - kBoundaryTolerance)) {
      packing.centers.push_back(g * (radius / norm));
    }
    if (static_cast<int64_t>(packing.centers.size()) > kMaxPackingCenters) {
      return absl::ResourceExhaustedError(absl::StrFormat(
          "packing exceeds the cap of %d centers", kMaxPackingCenters));
    }
    int axis = 0;
    while (axis < dim && ++index[axis] > k_max) index[axis++] = -k_max;
    if (axis == dim) break;
  }
  return packing;
}

double DefaultPackingRadius(double diameter, int dim, double epsilon,
                            int64_t n) {
  const double r = diameter * dim / (epsilon * static_cast<double>(n));
  return std::min(r, diameter / 2);
}

std::string PackingToCsv(const Packing& packing) {
  std::string out = absl::StrFormat(
      "# dim=%d,diameter=%.17g,radius=%.17g,spacing=%.17g,cert=%.17g,"
      "count=%d\n",
      packing.dim, packing.diameter, packing.radius, packing.spacing,
      packing.covering_radius_cert, packing.centers.size());
  for (const Vector& c : packing.centers) {
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      absl::StrAppendFormat(&out, "%s%.17g", i == 0 ? "" : ",", c(i));
    }
    out += "\n";
  }
  return out;
}

absl::StatusOr<Packing> PackingFromCsv(absl::string_view text) {
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipEmpty());
  if (lines.empty() || !absl::ConsumePrefix(&lines[0], "# ")) {
    return absl::InvalidArgumentError("packing CSV is missing its header");
  }
  Packing packing;
  int64_t count = -1;
  for (absl::string_view field : absl::StrSplit(lines[0], ',')) {
    std::pair<absl::string_view, absl::string_view> kv =
        absl::StrSplit(field, absl::MaxSplits('=', 1));
    bool ok = true;
    if (kv.first == "dim") {
      ok = absl::SimpleAtoi(kv.second, &packing.dim);
    } else if (kv.first == "diameter") {
      ok = absl::SimpleAtod(kv.second, &packing.diameter);
    } else if (kv.first == "radius") {
      ok = absl::SimpleAtod(kv.second, &packing.radius);
    } else if (kv.first == "spacing") {
      ok = absl::SimpleAtod(kv.second, &packing.spacing);
    } else if (kv.first == "cert") {
      ok = absl::SimpleAtod(kv.second, &packing.covering_radius_cert);
    } else if (kv.first == "count") {
      ok = absl::SimpleAtoi(kv.second, &count);
    }
    if (!ok) {
      return absl::InvalidArgumentError(
          absl::StrCat("bad packing header field '", field, "'"));
    }
  }
  if (packing.dim < 1 || count != static_cast<int64_t>(lines.size()) - 1) {
    return absl::InvalidArgumentError("packing header does not match body");
  }
  for (size_t j = 1; j < lines.size(); ++j) {
    std::vector<absl::string_view> cells = absl::StrSplit(lines[j], ',');
    if (static_cast<int>(cells.size()) != packing.dim) {
      return absl::InvalidArgumentError(
          absl::StrFormat("packing row %d has the wrong width", j - 1));
    }
    Vector c(packing.dim);
    for (int i = 0; i < packing.dim; ++i) {
      if (!absl::SimpleAtod(cells[i], &c(i))) {
        return absl::InvalidArgumentError(
            absl::StrFormat("packing row %d is not numeric", j - 1));
      }
    }
    packing.centers.push_back(std::move(c));
  }
  return packing;
}

double NearestCenterDistance(const Packing& packing, const Vector& x) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vector& c : packing.centers) {
    best = std::min(best, (c - x).squaredNorm());
  }
  return std::sqrt(best);
}

absl::StatusOr<std::vector<double>> DiscreteEmProbabilities(
    const std::vector<double>& risks, double epsilon, int64_t n,
    double lipschitz, double diameter) {
  if (risks.empty()) return absl::InvalidArgumentError("no centers");
  if (!(epsilon >= 0) || n < 1 || !(lipschitz > 0 && diameter > 0)) {
    return absl::InvalidArgumentError(
        "discrete mechanism needs eps >= 0, n >= 1, G > 0, D > 0");
  }
  const double scale =
      epsilon * static_cast<double>(n) / (2 * lipschitz * diameter);
  const double lowest = *std::min_element(risks.begin(), risks.end());
  std::vector<double> p(risks.size());
  double total = 0;
  for (size_t i = 0; i < risks.size(); ++i) {
    if (!std::isfinite(risks[i])) {
      return absl::InvalidArgumentError("risk values must be finite");
    }
    p[i] = std::exp(-scale * (risks[i] - lowest));
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

absl::StatusOr<DiscreteSelection> DiscreteEmSelect(
    const Packing& packing, const Problem& problem, const Dataset& dataset,
    double epsilon, double lipschitz, double diameter, Rng& rng,
    Ledger* ledger) {
  if (packing.centers.empty()) return absl::InvalidArgumentError("empty net");
  if (dataset.size() == 0) return absl::InvalidArgumentError("empty dataset");
  const Vector z_mean = dataset.samples.rowwise().mean();
  std::vector<double> risks;
  risks.reserve(packing.centers.size());
  for (const Vector& c : packing.centers) {
    risks.push_back(BaseValue(problem, c) + z_mean.dot(c));
  }
  absl::StatusOr<std::vector<double>> p = DiscreteEmProbabilities(
      risks, epsilon, dataset.size(), lipschitz, diameter);
  if (!p.ok()) return p.status();
  if (ledger != nullptr) {
    if (absl::Status s = ledger->Charge("em/packing", epsilon, 0); !s.ok()) {
      return s;
    }
  }
  std::discrete_distribution<size_t> pick(p->begin(), p->end());
  DiscreteSelection selection;
  selection.index = static_cast<int64_t>(pick(rng.engine()));
  selection.point = packing.centers[selection.index];
  if (p->size() <= kAuditLimit) selection.probabilities = *std::move(p);
  return selection;
}

absl::StatusOr<PackingRiskReport> ComputePackingRisk(const Vector& selected,
                                                     const Problem& problem,
                                                     const Dataset& dataset,
                                                     double diameter) {
  if (dataset.size() == 0) return absl::InvalidArgumentError("empty dataset");
  const Vector z_mean = dataset.samples.rowwise().mean();
  auto empirical = [&](const Vector& x) {
    return BaseValue(problem, x) + z_mean.dot(x);
  };
  auto population = [&](const Vector& x) { return BaseValue(problem, x); };
  absl::StatusOr<GridMinimum> emp =
      MinimizeOnBall(empirical, problem.dim, diameter / 2);
  if (!emp.ok()) return emp.status();
  absl::StatusOr<GridMinimum> pop =
      MinimizeOnBall(population, problem.dim, diameter / 2);
  if (!pop.ok()) return pop.status();
  return PackingRiskReport{
      .empirical_excess = empirical(selected) - emp->value,
      .population_excess = population(selected) - pop->value};
}

}  // namespace dpnc
