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

// Synthetic non-convex benchmark family. Every per-sample loss has the form
//
//   f(x; z) = g(x) + <z, x>,   z uniform in [-p, p]^d,
//
// so the empirical risk over any subset is g(x) + <mean(z), x> and the
// population risk is exactly g(x). Base shapes:
//
//   quadratic     g(x) = |x|^2 / 2
//   cubic_saddle  g(x) = a (x1^3 / 3 - x1) + |x_{2:d}|^2 / 2
//   double_well   g(x) = (x1^2 - 1)^2 / 4 + |x_{2:d}|^2 / 2

#ifndef DPNC_OBJECTIVE_H_
#define DPNC_OBJECTIVE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dpnc/random.h"

namespace dpnc {

enum class ProblemKind { kQuadratic, kCubicSaddle, kDoubleWell };

absl::string_view ProblemKindName(ProblemKind kind);
absl::StatusOr<ProblemKind> ParseProblemKind(absl::string_view name);

// Constants that parameterize every guarantee in the toolkit.
struct ObjectiveSpec {
  double lipschitz = 0;          // G: gradient norm bound on the domain.
  double smooth = 0;             // M: gradient Lipschitz constant.
  double hessian_lipschitz = 0;  // rho.
  double value_range = 0;        // B: sup - inf of the risk on the domain.
  double diameter = 0;           // D.
  int dim = 0;                   // d.

  absl::Status Validate() const;
};

struct Problem {
  ProblemKind kind = ProblemKind::kQuadratic;
  int dim = 1;
  double perturbation_bound = 0;
  // Coefficient a > 0 of the cubic term; unused by the other kinds.
  double cubic_scale = 1.0;
  uint64_t seed = 0;
};

absl::StatusOr<Problem> MakeProblem(ProblemKind kind, int dim,
                                    double perturbation_bound, uint64_t seed,
                                    double cubic_scale = 1.0);

// Valid (G, M, rho, B) on the centered ball of the given diameter. The
// quadratic has rho = 0; `rho_floor` replaces it, since the escape radius
// divides by sqrt(rho).
ObjectiveSpec ProblemConstants(const Problem& problem, double diameter,
                               double rho_floor = 1e-3);

// Perturbation vectors z_1..z_n, stored column-wise (d x n).
struct Dataset {
  Matrix samples;
  uint64_t generator_seed = 0;

  int size() const { return static_cast<int>(samples.cols()); }
  int dim() const { return static_cast<int>(samples.rows()); }
};

// Draws n i.i.d. perturbations uniform in [-p, p]^d.
absl::StatusOr<Dataset> MakeDataset(const Problem& problem, int n,
                                    uint64_t seed);

// Columns of `dataset` selected by `indices`, in order.
Dataset Subset(const Dataset& dataset, std::span<const int> indices);

struct Evaluation {
  double value = 0;
  Vector gradient;
  std::optional<Matrix> hessian;
};

// Base shape g and its derivatives (perturbation excluded). This is also the
// exact population risk F_P.
double BaseValue(const Problem& problem, const Vector& x);
Vector BaseGradient(const Problem& problem, const Vector& x);
Matrix BaseHessian(const Problem& problem, const Vector& x);

// Per-sample loss f(x; z).
Evaluation EvaluateSample(const Problem& problem, const Vector& z,
                          const Vector& x, bool want_hessian);

// Exact average over all of `dataset`.
absl::StatusOr<Evaluation> Evaluate(const Problem& problem,
                                    const Dataset& dataset, const Vector& x,
                                    bool want_hessian);

// Exact average over the samples listed in `indices`.
absl::StatusOr<Evaluation> Evaluate(const Problem& problem,
                                    const Dataset& dataset,
                                    std::span<const int> indices,
                                    const Vector& x, bool want_hessian);

// Population risk F_P, known in closed form because E[z] = 0.
Evaluation EvaluatePopulation(const Problem& problem, const Vector& x,
                              bool want_hessian);

// Dense grid search for the minimum of `fn` over the centered ball of the
// given radius, followed by one finer local pass. Only dim <= 2 is supported.
struct GridMinimum {
  Vector argmin;
  double value = 0;
};
absl::StatusOr<GridMinimum> MinimizeOnBall(
    const std::function<double(const Vector&)>& fn, int dim, double radius,
    int points_per_axis = 801);

// Flat CSV: one header line
//   # kind=<k>,seed=<s>,n=<n>,d=<d>,perturbation_bound=<p>,cubic_scale=<a>
// followed by n rows of d comma-separated reals (17 significant digits).
std::string DatasetToCsv(const Problem& problem, const Dataset& dataset);
struct LoadedDataset {
  Problem problem;
  Dataset dataset;
};
absl::StatusOr<LoadedDataset> DatasetFromCsv(absl::string_view text);

}  // namespace dpnc

#endif  // DPNC_OBJECTIVE_H_
