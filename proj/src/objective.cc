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

#include "dpnc/objective.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <sstream>
#include <vector>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace dpnc {
namespace {

double RestSquaredNorm(const Vector& x) {
  return x.size() > 1 ? x.tail(x.size() - 1).squaredNorm() : 0.0;
}

// Largest value of h over the candidates that fall inside [lo, hi].
template <typename F>
double MaxOver(F h, double lo, double hi, std::initializer_list<double> extra) {
  double best = std::max(h(lo), h(hi));
  for (double t : extra) {
    if (t >= lo && t <= hi) best = std::max(best, h(t));
  }
  return best;
}

template <typename F>
double MinOver(F h, double lo, double hi, std::initializer_list<double> extra) {
  double best = std::min(h(lo), h(hi));
  for (double t : extra) {
    if (t >= lo && t <= hi) best = std::min(best, h(t));
  }
  return best;
}

}  // namespace

absl::string_view ProblemKindName(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kQuadratic:
      return "quadratic";
    case ProblemKind::kCubicSaddle:
      return "cubic_saddle";
    case ProblemKind::kDoubleWell:
      return "double_well";
  }
  return "unknown";
}

absl::StatusOr<ProblemKind> ParseProblemKind(absl::string_view name) {
  if (name == "quadratic") return ProblemKind::kQuadratic;
  if (name == "cubic_saddle") return ProblemKind::kCubicSaddle;
  if (name == "double_well") return ProblemKind::kDoubleWell;
  return absl::InvalidArgumentError(
      absl::StrCat("unknown problem kind '", name, "'"));
}

absl::Status ObjectiveSpec::Validate() const {
  if (!(lipschitz > 0 && smooth > 0 && hessian_lipschitz > 0 &&
        value_range > 0 && diameter > 0 && dim > 0)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "objective constants must be positive: G=%g M=%g rho=%g B=%g D=%g "
        "d=%d",
        lipschitz, smooth, hessian_lipschitz, value_range, diameter, dim));
  }
  return absl::OkStatus();
}

absl::StatusOr<Problem> MakeProblem(ProblemKind kind, int dim,
                                    double perturbation_bound, uint64_t seed,
                                    double cubic_scale) {
  if (dim < 1) return absl::InvalidArgumentError("problem dimension must be >= 1");
  if (!(perturbation_bound >= 0)) {
    return absl::InvalidArgumentError("perturbation bound must be >= 0");
  }
  if (kind == ProblemKind::kCubicSaddle && !(cubic_scale > 0)) {
    return absl::InvalidArgumentError("cubic_saddle needs a > 0");
  }
  return Problem{.kind = kind,
                 .dim = dim,
                 .perturbation_bound = perturbation_bound,
                 .cubic_scale = cubic_scale,
                 .seed = seed};
}

ObjectiveSpec ProblemConstants(const Problem& problem, double diameter,
                               double rho_floor) {
  const double r = diameter / 2;
  const double r2 = r * r;
  const bool has_rest = problem.dim > 1;
  const double rest_sq = has_rest ? r2 : 0.0;
  double g_sq = 0, smooth = 1, rho = 0, range = 0;

  switch (problem.kind) {
    case ProblemKind::kQuadratic:
      g_sq = r2;
      smooth = 1;
      rho = 0;
      range = r2 / 2;
      break;
    case ProblemKind::kCubicSaddle: {
      const double a = problem.cubic_scale;
      // |grad g|^2 = a^2 (u - 1)^2 + (R^2 - u) with u = x1^2 on the sphere;
      // convex in u, so the maximum sits at an endpoint.
      g_sq = std::max(a * a + rest_sq, a * a * (r2 - 1) * (r2 - 1));
      smooth = std::max(2 * a * r, 1.0);
      rho = 2 * a;
      auto cubic = [a](double t) { return a * (t * t * t / 3 - t); };
      auto upper = [&](double t) {
        return cubic(t) + (has_rest ? 0.5 * (r2 - t * t) : 0.0);
      };
      const double disc = std::sqrt(1 + 4 * a * a);
      const double hi =
          MaxOver(upper, -r, r, {(1 + disc) / (2 * a), (1 - disc) / (2 * a)});
      const double lo = MinOver(cubic, -r, r, {-1.0, 1.0});
      range = hi - lo;
      break;
    }
    case ProblemKind::kDoubleWell: {
      // In u = x1^2: |grad g|^2 = u (u - 1)^2 + (R^2 - u).
      auto grad_sq = [&](double u) {
        return u * (u - 1) * (u - 1) + (has_rest ? r2 - u : 0.0);
      };
      g_sq = MaxOver(grad_sq, 0, r2, {1.0 / 3, 1.0, 4.0 / 3});
      smooth = std::max(3 * r2 - 1, 1.0);
      rho = 6 * r;
      auto upper = [&](double u) {
        return 0.25 * (u - 1) * (u - 1) + (has_rest ? 0.5 * (r2 - u) : 0.0);
      };
      const double hi = std::max(upper(0), upper(r2));
      const double lo = r2 >= 1 ? 0.0 : 0.25 * (r2 - 1) * (r2 - 1);
      range = hi - lo;
      break;
    }
  }

  // The linear term <z, x> has gradient z with |z| <= p sqrt(d).
  const double z_norm = problem.perturbation_bound * std::sqrt(problem.dim);
  ObjectiveSpec spec;
  spec.lipschitz = std::sqrt(g_sq) + z_norm;
  spec.smooth = smooth;
  spec.hessian_lipschitz = std::max(rho, rho_floor);
  spec.value_range = range + 2 * z_norm * r;
  spec.diameter = diameter;
  spec.dim = problem.dim;
  return spec;
}

absl::StatusOr<Dataset> MakeDataset(const Problem& problem, int n,
                                    uint64_t seed) {
  if (n < 1) return absl::InvalidArgumentError("dataset size must be >= 1");
  Rng rng(seed);
  Dataset data;
  data.generator_seed = seed;
  data.samples.resize(problem.dim, n);
  const double p = problem.perturbation_bound;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < problem.dim; ++i) {
      data.samples(i, j) = p * (2 * rng.UniformOpen() - 1);
    }
  }
  return data;
}

Dataset Subset(const Dataset& dataset, std::span<const int> indices) {
  Dataset out;
  out.generator_seed = dataset.generator_seed;
  out.samples.resize(dataset.dim(), static_cast<Eigen::Index>(indices.size()));
  for (size_t j = 0; j < indices.size(); ++j) {
    out.samples.col(static_cast<Eigen::Index>(j)) =
        dataset.samples.col(indices[j]);
  }
  return out;
}

double BaseValue(const Problem& problem, const Vector& x) {
  const double rest = 0.5 * RestSquaredNorm(x);
  const double x1 = x(0);
  switch (problem.kind) {
    case ProblemKind::kQuadratic:
      return 0.5 * x.squaredNorm();
    case ProblemKind::kCubicSaddle:
      return problem.cubic_scale * (x1 * x1 * x1 / 3 - x1) + rest;
    case ProblemKind::kDoubleWell:
      return 0.25 * (x1 * x1 - 1) * (x1 * x1 - 1) + rest;
  }
  return 0;
}

Vector BaseGradient(const Problem& problem, const Vector& x) {
  Vector grad = x;
  const double x1 = x(0);
  switch (problem.kind) {
    case ProblemKind::kQuadratic:
      break;
    case ProblemKind::kCubicSaddle:
      grad(0) = problem.cubic_scale * (x1 * x1 - 1);
      break;
    case ProblemKind::kDoubleWell:
      grad(0) = x1 * (x1 * x1 - 1);
      break;
  }
  return grad;
}

Matrix BaseHessian(const Problem& problem, const Vector& x) {
  Matrix hess = Matrix::Identity(x.size(), x.size());
  const double x1 = x(0);
  switch (problem.kind) {
    case ProblemKind::kQuadratic:
      break;
    case ProblemKind::kCubicSaddle:
      hess(0, 0) = 2 * problem.cubic_scale * x1;
      break;
    case ProblemKind::kDoubleWell:
      hess(0, 0) = 3 * x1 * x1 - 1;
      break;
  }
  return hess;
}

namespace {

Evaluation EvaluateWithMean(const Problem& problem, const Vector& z_mean,
                            const Vector& x, bool want_hessian) {
  Evaluation out;
  out.value = BaseValue(problem, x) + z_mean.dot(x);
  out.gradient = BaseGradient(problem, x) + z_mean;
  if (want_hessian) out.hessian = BaseHessian(problem, x);
  return out;
}

}  // namespace

Evaluation EvaluateSample(const Problem& problem, const Vector& z,
                          const Vector& x, bool want_hessian) {
  return EvaluateWithMean(problem, z, x, want_hessian);
}

absl::StatusOr<Evaluation> Evaluate(const Problem& problem,
                                    const Dataset& dataset, const Vector& x,
                                    bool want_hessian) {
  if (dataset.size() == 0) {
    return absl::InvalidArgumentError("cannot evaluate on an empty subset");
  }
  const Vector z_mean = dataset.samples.rowwise().mean();
  return EvaluateWithMean(problem, z_mean, x, want_hessian);
}

absl::StatusOr<Evaluation> Evaluate(const Problem& problem,
                                    const Dataset& dataset,
                                    std::span<const int> indices,
                                    const Vector& x, bool want_hessian) {
  if (indices.empty()) {
    return absl::InvalidArgumentError("cannot evaluate on an empty subset");
  }
  Vector z_mean = Vector::Zero(dataset.dim());
  for (int idx : indices) z_mean += dataset.samples.col(idx);
  z_mean /= static_cast<double>(indices.size());
  return EvaluateWithMean(problem, z_mean, x, want_hessian);
}

Evaluation EvaluatePopulation(const Problem& problem, const Vector& x,
                              bool want_hessian) {
  return EvaluateWithMean(problem, Vector::Zero(x.size()), x, want_hessian);
}

absl::StatusOr<GridMinimum> MinimizeOnBall(
    const std::function<double(const Vector&)>& fn, int dim, double radius,
    int points_per_axis) {
  if (dim < 1 || dim > 2) {
    return absl::InvalidArgumentError(
        absl::StrFormat("grid search supports d <= 2, got d = %d", dim));
  }
  if (!(radius > 0) || points_per_axis < 3) {
    return absl::InvalidArgumentError("grid search needs radius > 0");
  }
  GridMinimum best{Vector::Zero(dim), fn(Vector::Zero(dim))};
  auto scan = [&](const Vector& center, double half_width) {
    const double step = 2 * half_width / (points_per_axis - 1);
    Vector x(dim);
    const int inner = dim == 2 ? points_per_axis : 1;
    const Vector base = best.argmin;
    for (int i = 0; i < points_per_axis; ++i) {
      x(0) = center(0) - half_width + i * step;
      for (int j = 0; j < inner; ++j) {
        if (dim == 2) x(1) = center(1) - half_width + j * step;
        if (x.norm() > radius) continue;
        const double v = fn(x);
        if (v < best.value) best = {x, v};
      }
    }
    return step;
  };
  const double coarse = scan(Vector::Zero(dim), radius);
  scan(Vector(best.argmin), 2 * coarse);
  return best;
}

std::string DatasetToCsv(const Problem& problem, const Dataset& dataset) {
  std::string out = absl::StrFormat(
      "# kind=%s,seed=%d,n=%d,d=%d,perturbation_bound=%.17g,cubic_scale=%.17g\n",
      ProblemKindName(problem.kind), dataset.generator_seed, dataset.size(),
      dataset.dim(), problem.perturbation_bound, problem.cubic_scale);
  for (int j = 0; j < dataset.size(); ++j) {
    for (int i = 0; i < dataset.dim(); ++i) {
      if (i > 0) out += ',';
      absl::StrAppendFormat(&out, "%.17g", dataset.samples(i, j));
    }
    out += '\n';
  }
  return out;
}

absl::StatusOr<LoadedDataset> DatasetFromCsv(absl::string_view text) {
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipEmpty());
  if (lines.empty() || !absl::ConsumePrefix(&lines[0], "# ")) {
    return absl::InvalidArgumentError("dataset CSV is missing its header");
  }
  LoadedDataset loaded;
  int n = -1, d = -1;
  for (absl::string_view field : absl::StrSplit(lines[0], ',')) {
    std::pair<absl::string_view, absl::string_view> kv =
        absl::StrSplit(field, absl::MaxSplits('=', 1));
    bool ok = true;
    if (kv.first == "kind") {
      absl::StatusOr<ProblemKind> kind = ParseProblemKind(kv.second);
      if (!kind.ok()) return kind.status();
      loaded.problem.kind = *kind;
    } else if (kv.first == "seed") {
      ok = absl::SimpleAtoi(kv.second, &loaded.dataset.generator_seed);
    } else if (kv.first == "n") {
      ok = absl::SimpleAtoi(kv.second, &n);
    } else if (kv.first == "d") {
      ok = absl::SimpleAtoi(kv.second, &d);
    } else if (kv.first == "perturbation_bound") {
      ok = absl::SimpleAtod(kv.second, &loaded.problem.perturbation_bound);
    } else if (kv.first == "cubic_scale") {
      ok = absl::SimpleAtod(kv.second, &loaded.problem.cubic_scale);
    }
    if (!ok) {
      return absl::InvalidArgumentError(
          absl::StrCat("bad dataset header field '", field, "'"));
    }
  }
  if (n < 1 || d < 1 || static_cast<int>(lines.size()) != n + 1) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "dataset header declares n=%d d=%d but body has %d rows", n, d,
        static_cast<int>(lines.size()) - 1));
  }
  loaded.problem.dim = d;
  loaded.problem.seed = loaded.dataset.generator_seed;
  loaded.dataset.samples.resize(d, n);
  for (int j = 0; j < n; ++j) {
    std::vector<absl::string_view> cells = absl::StrSplit(lines[j + 1], ',');
    if (static_cast<int>(cells.size()) != d) {
      return absl::InvalidArgumentError(
          absl::StrFormat("dataset row %d has %d columns, want %d", j,
                          static_cast<int>(cells.size()), d));
    }
    for (int i = 0; i < d; ++i) {
      if (!absl::SimpleAtod(cells[i], &loaded.dataset.samples(i, j))) {
        return absl::InvalidArgumentError(
            absl::StrFormat("dataset row %d column %d is not a number", j, i));
      }
    }
  }
  return loaded;
}

}  // namespace dpnc
