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

#include "dpnc/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <thread>

#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_replace.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "dpnc/expmech.h"
#include "dpnc/oracle.h"
#include "dpnc/packing.h"
#include "dpnc/privacy.h"
#include "dpnc/select.h"

namespace dpnc {
namespace {

std::string FormatDouble(double v) { return absl::StrFormat("%.17g", v); }

absl::Status BadValue(absl::string_view key, absl::string_view value) {
  return absl::InvalidArgumentError(
      absl::StrCat("bad value '", value, "' for key '", key, "'"));
}

absl::Status ParseDouble(absl::string_view key, absl::string_view value,
                         double& out) {
  if (!absl::SimpleAtod(value, &out)) return BadValue(key, value);
  return absl::OkStatus();
}

template <typename Int>
absl::Status ParseInt(absl::string_view key, absl::string_view value,
                      Int& out) {
  if (!absl::SimpleAtoi(value, &out)) return BadValue(key, value);
  return absl::OkStatus();
}

absl::Status ParseBool(absl::string_view key, absl::string_view value,
                       bool& out) {
  if (value == "true" || value == "1") {
    out = true;
  } else if (value == "false" || value == "0") {
    out = false;
  } else {
    return BadValue(key, value);
  }
  return absl::OkStatus();
}

absl::Status ParseOptionalInt(absl::string_view key, absl::string_view value,
                              std::optional<int64_t>& out) {
  if (value.empty()) {
    out.reset();
    return absl::OkStatus();
  }
  int64_t v = 0;
  if (absl::Status s = ParseInt(key, value, v); !s.ok()) return s;
  out = v;
  return absl::OkStatus();
}

std::string OptionalIntText(const std::optional<int64_t>& v) {
  return v ? absl::StrCat(*v) : "";
}

struct KeySpec {
  const char* key;
  std::function<absl::Status(ExperimentConfig&, absl::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define DPNC_DOUBLE_KEY(name, field)                                    \
  KeySpec {                                                              \
    name,                                                                \
        [](ExperimentConfig& c, absl::string_view v) {                   \
          return ParseDouble(name, v, c.field);                          \
        },                                                               \
        [](const ExperimentConfig& c) { return FormatDouble(c.field); }  \
  }
#define DPNC_INT_KEY(name, field)                                        \
  KeySpec {                                                              \
    name,                                                                \
        [](ExperimentConfig& c, absl::string_view v) {                   \
          return ParseInt(name, v, c.field);                             \
        },                                                               \
        [](const ExperimentConfig& c) { return absl::StrCat(c.field); }  \
  }
#define DPNC_BOOL_KEY(name, field)                                       \
  KeySpec {                                                              \
    name,                                                                \
        [](ExperimentConfig& c, absl::string_view v) {                   \
          return ParseBool(name, v, c.field);                            \
        },                                                               \
        [](const ExperimentConfig& c) {                                  \
          return std::string(c.field ? "true" : "false");                \
        }                                                                \
  }
#define DPNC_OPT_INT_KEY(name, field)                                    \
  KeySpec {                                                              \
    name,                                                                \
        [](ExperimentConfig& c, absl::string_view v) {                   \
          return ParseOptionalInt(name, v, c.field);                     \
        },                                                               \
        [](const ExperimentConfig& c) { return OptionalIntText(c.field); } \
  }

const std::vector<KeySpec>& Keys() {
  static const std::vector<KeySpec>* keys = new std::vector<KeySpec>{
      {"experiment",
       [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
         absl::StatusOr<ExperimentKind> kind = ParseExperimentKind(v);
         if (!kind.ok()) return kind.status();
         c.experiment = *kind;
         return absl::OkStatus();
       },
       [](const ExperimentConfig& c) {
         return std::string(ExperimentKindName(c.experiment));
       }},
      {"problem",
       [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
         absl::StatusOr<ProblemKind> kind = ParseProblemKind(v);
         if (!kind.ok()) return kind.status();
         c.problem = *kind;
         return absl::OkStatus();
       },
       [](const ExperimentConfig& c) {
         return std::string(ProblemKindName(c.problem));
       }},
      DPNC_INT_KEY("d", dim),
      DPNC_INT_KEY("n", n),
      DPNC_DOUBLE_KEY("perturbation_bound", perturbation_bound),
      DPNC_DOUBLE_KEY("cubic_scale", cubic_scale),
      DPNC_DOUBLE_KEY("diameter", diameter),
      DPNC_DOUBLE_KEY("rho_floor", rho_floor),
      DPNC_DOUBLE_KEY("epsilon", epsilon),
      DPNC_DOUBLE_KEY("delta", delta),
      DPNC_DOUBLE_KEY("omega", omega),
      DPNC_INT_KEY("seed", seed),
      DPNC_INT_KEY("trials", trials),
      DPNC_DOUBLE_KEY("spider_share", spider_share),
      {"x0",
       [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
         c.x0.clear();
         if (v.empty() || v == "origin") return absl::OkStatus();
         for (absl::string_view cell : absl::StrSplit(v, ',')) {
           double x = 0;
           if (!absl::SimpleAtod(absl::StripAsciiWhitespace(cell), &x)) {
             return BadValue("x0", v);
           }
           c.x0.push_back(x);
         }
         return absl::OkStatus();
       },
       [](const ExperimentConfig& c) {
         std::vector<std::string> cells;
         for (double x : c.x0) cells.push_back(FormatDouble(x));
         return absl::StrJoin(cells, ",");
       }},
      DPNC_BOOL_KEY("strict_ledger", strict_ledger),
      DPNC_DOUBLE_KEY("c_gamma", knobs.c_gamma),
      DPNC_DOUBLE_KEY("c_freeze", knobs.c_freeze),
      DPNC_DOUBLE_KEY("c_iterations", knobs.c_iterations),
      DPNC_DOUBLE_KEY("c_threshold", knobs.c_threshold),
      DPNC_DOUBLE_KEY("threshold_exponent", knobs.threshold_exponent),
      DPNC_DOUBLE_KEY("c_drift_count", knobs.c_drift_count),
      DPNC_DOUBLE_KEY("c_zeta", knobs.c_zeta),
      DPNC_DOUBLE_KEY("batch_scale", knobs.batch_scale),
      DPNC_BOOL_KEY("polylog", knobs.polylog),
      DPNC_DOUBLE_KEY("divergence_factor", knobs.divergence_factor),
      DPNC_INT_KEY("max_iterations", knobs.max_iterations),
      DPNC_OPT_INT_KEY("iterations_override", knobs.iterations_override),
      DPNC_OPT_INT_KEY("freeze_override", knobs.freeze_override),
      DPNC_INT_KEY("candidates", candidates),
      DPNC_BOOL_KEY("plant_minimizer", plant_minimizer),
      DPNC_DOUBLE_KEY("selector_alpha", selector_alpha),
      DPNC_DOUBLE_KEY("em_c_eta", em_c_eta),
      DPNC_DOUBLE_KEY("em_c_steps", em_c_steps),
      DPNC_OPT_INT_KEY("em_steps", em_steps),
      DPNC_DOUBLE_KEY("packing_radius", packing_radius),
      {"n_list",
       [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
         c.n_list.clear();
         for (absl::string_view cell :
              absl::StrSplit(v, ',', absl::SkipEmpty())) {
           int64_t n = 0;
           if (!absl::SimpleAtoi(absl::StripAsciiWhitespace(cell), &n)) {
             return BadValue("n_list", v);
           }
           c.n_list.push_back(n);
         }
         return absl::OkStatus();
       },
       [](const ExperimentConfig& c) { return absl::StrJoin(c.n_list, ","); }},
      {"out",
       [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
         c.out = std::string(v);
         return absl::OkStatus();
       },
       [](const ExperimentConfig& c) { return c.out; }},
  };
  return *keys;
}

#undef DPNC_DOUBLE_KEY
#undef DPNC_INT_KEY
#undef DPNC_BOOL_KEY
#undef DPNC_OPT_INT_KEY

// --- trial helpers ---------------------------------------------------------

struct TrialContext {
  const ExperimentConfig* config;
  int64_t n;
  int64_t trial;        // index within its group
  uint64_t data_seed;
  uint64_t noise_seed;
};

std::string CleanStatus(const absl::Status& status) {
  std::string text = absl::StrCat("error: ", status.message());
  absl::StrReplaceAll({{",", ";"}, {"\n", " "}, {"\r", " "}}, &text);
  return text;
}

Vector StartPoint(const ExperimentConfig& config) {
  if (config.x0.empty()) return Vector::Zero(config.dim);
  return Eigen::Map<const Vector>(config.x0.data(),
                                  static_cast<Eigen::Index>(config.x0.size()));
}

void FillLedger(const Ledger& ledger, ResultRow& row) {
  const Budget total = ledger.Total();
  row.eps_spent = total.epsilon;
  row.delta_spent = total.delta;
  row.eps_budget = ledger.target().epsilon;
  row.delta_budget = ledger.target().delta;
}

// Local minimizer of F_D near x1 = 1 (x1 = 0 for the quadratic) with the
// remaining coordinates at -mean(z); Newton on the first coordinate.
Vector PlantedMinimizer(const Problem& problem, const Vector& z_mean) {
  Vector x = -z_mean;
  double t = problem.kind == ProblemKind::kQuadratic ? -z_mean(0) : 1.0;
  if (problem.kind != ProblemKind::kQuadratic) {
    for (int i = 0; i < 100; ++i) {
      Vector probe = Vector::Zero(problem.dim);
      probe(0) = t;
      const double g = BaseGradient(problem, probe)(0) + z_mean(0);
      const double h = BaseHessian(problem, probe)(0, 0);
      if (h <= 0) break;
      const double step = g / h;
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
  }
  x(0) = t;
  return x;
}

Vector UniformInBall(int dim, double radius, Rng& rng) {
  Vector dir = rng.GaussianVector(dim, 1.0);
  const double norm = dir.norm();
  if (norm == 0) return Vector::Zero(dim);
  const double r = radius * std::pow(rng.UniformOpen(), 1.0 / dim);
  return dir * (r / norm);
}

void CertifySelection(const Vector& x, const Problem& problem,
                      const Vector& z_mean, bool population, double alpha_grad,
                      double smin_floor, ResultRow& row) {
  Vector grad = BaseGradient(problem, x);
  if (!population) grad += z_mean;
  row.grad_norm = grad.norm();
  absl::StatusOr<double> smin = SmallestEigenvalue(BaseHessian(problem, x));
  row.smin = smin.ok() ? *smin : std::nan("");
  row.alpha_grad = alpha_grad;
  row.smin_floor = smin_floor;
  row.is_sosp = *row.grad_norm <= alpha_grad && *row.smin >= smin_floor;
}

ResultRow SpiderTrial(const TrialContext& ctx, OracleMode mode) {
  const ExperimentConfig& config = *ctx.config;
  ResultRow row;
  row.experiment = ExperimentKindName(config.experiment);
  row.trial = ctx.trial;
  row.n = ctx.n;
  row.seed = ctx.noise_seed;
  row.eps_budget = config.epsilon;
  row.delta_budget = config.delta;

  absl::StatusOr<Problem> problem =
      MakeProblem(config.problem, config.dim, config.perturbation_bound,
                  ctx.data_seed, config.cubic_scale);
  if (!problem.ok()) {
    row.status = CleanStatus(problem.status());
    return row;
  }
  absl::StatusOr<Dataset> dataset =
      MakeDataset(*problem, static_cast<int>(ctx.n), ctx.data_seed);
  if (!dataset.ok()) {
    row.status = CleanStatus(dataset.status());
    return row;
  }
  const ObjectiveSpec spec =
      ProblemConstants(*problem, config.diameter, config.rho_floor);
  Ledger ledger({config.epsilon, config.delta}, config.strict_ledger);
  Rng rng(ctx.noise_seed);
  const Budget spider_budget{config.epsilon * config.spider_share,
                             config.delta};
  const double select_eps = config.epsilon * (1 - config.spider_share);

  absl::StatusOr<SpiderOutcome> outcome =
      RunPrivateSpider(*problem, *dataset, spec, spider_budget, mode,
                       config.omega, config.knobs, StartPoint(config), rng,
                       ledger);
  if (!outcome.ok()) {
    row.status = CleanStatus(outcome.status());
    FillLedger(ledger, row);
    return row;
  }
  row.o1_calls = outcome->first_calls;
  row.o2_calls = outcome->second_calls;
  row.iterations = static_cast<int64_t>(outcome->trace.steps.size());
  row.termination = TerminationName(outcome->trace.termination);

  const std::vector<Vector> candidates(outcome->trace.points.begin() + 1,
                                       outcome->trace.points.end());
  Dataset select_data = *dataset;
  if (mode == OracleMode::kPopulation) {
    std::vector<int> second(static_cast<size_t>(outcome->params.second_split));
    std::iota(second.begin(), second.end(),
              static_cast<int>(outcome->params.first_split));
    select_data = Subset(*dataset, second);
  }
  const double alpha = outcome->params.config.alpha;
  absl::StatusOr<SelectionResult> selection =
      AboveThreshold(candidates, *problem, select_data, spec, alpha,
                     select_eps, config.omega, rng, &ledger);
  FillLedger(ledger, row);
  if (!selection.ok()) {
    row.status = CleanStatus(selection.status());
    return row;
  }
  if (!selection->index) {
    row.status = "no_selection";
    return row;
  }
  row.selected_index = *selection->index;
  const double count =
      static_cast<double>(std::max<size_t>(candidates.size(), 1));
  const double m = static_cast<double>(select_data.size());
  const double log_term = std::log(2 * count / config.omega);
  double alpha_grad = alpha + 32 * log_term * spec.lipschitz / (m * select_eps);
  double smin_floor = -std::sqrt(spec.hessian_lipschitz * alpha) -
                      32 * log_term * spec.smooth / (m * select_eps);
  if (mode == OracleMode::kPopulation) {
    auto [dev_g, dev_h] =
        PopulationDeviationBound(select_data.size(), spec, config.omega);
    alpha_grad += dev_g;
    smin_floor -= dev_h;
  }
  const Vector z_mean = dataset->samples.rowwise().mean();
  CertifySelection(*selection->point, *problem, z_mean,
                   mode == OracleMode::kPopulation, alpha_grad, smin_floor,
                   row);
  return row;
}

ResultRow AboveThresholdTrial(const TrialContext& ctx) {
  const ExperimentConfig& config = *ctx.config;
  ResultRow row;
  row.experiment = ExperimentKindName(config.experiment);
  row.trial = ctx.trial;
  row.n = ctx.n;
  row.seed = ctx.noise_seed;
  absl::StatusOr<Problem> problem =
      MakeProblem(config.problem, config.dim, config.perturbation_bound,
                  ctx.data_seed, config.cubic_scale);
  if (!problem.ok()) {
    row.status = CleanStatus(problem.status());
    return row;
  }
  absl::StatusOr<Dataset> dataset =
      MakeDataset(*problem, static_cast<int>(ctx.n), ctx.data_seed);
  if (!dataset.ok()) {
    row.status = CleanStatus(dataset.status());
    return row;
  }
  const ObjectiveSpec spec =
      ProblemConstants(*problem, config.diameter, config.rho_floor);
  Ledger ledger({config.epsilon, config.delta}, config.strict_ledger);
  Rng rng(ctx.noise_seed);
  const Vector z_mean = dataset->samples.rowwise().mean();
  std::vector<Vector> candidates;
  for (int64_t i = 0; i < config.candidates; ++i) {
    candidates.push_back(UniformInBall(config.dim, config.diameter / 2, rng));
  }
  if (config.plant_minimizer) {
    std::uniform_int_distribution<int64_t> where(0, config.candidates - 1);
    candidates[static_cast<size_t>(where(rng.engine()))] =
        PlantedMinimizer(*problem, z_mean);
  }
  absl::StatusOr<SelectionResult> selection =
      AboveThreshold(candidates, *problem, *dataset, spec,
                     config.selector_alpha, config.epsilon, config.omega, rng,
                     &ledger);
  FillLedger(ledger, row);
  if (!selection.ok()) {
    row.status = CleanStatus(selection.status());
    return row;
  }
  row.iterations = static_cast<int64_t>(selection->scanned.size());
  row.termination = selection->halt_reason;
  if (!selection->index) {
    row.status = "no_selection";
    return row;
  }
  row.selected_index = *selection->index;
  const double m = static_cast<double>(dataset->size());
  const double log_term =
      std::log(2 * static_cast<double>(candidates.size()) / config.omega);
  CertifySelection(
      *selection->point, *problem, z_mean, false,
      config.selector_alpha +
          32 * log_term * spec.lipschitz / (m * config.epsilon),
      -std::sqrt(spec.hessian_lipschitz * config.selector_alpha) -
          32 * log_term * spec.smooth / (m * config.epsilon),
      row);
  return row;
}

ResultRow EmTrial(const TrialContext& ctx, bool packing) {
  const ExperimentConfig& config = *ctx.config;
  ResultRow row;
  row.experiment = ExperimentKindName(config.experiment);
  row.trial = ctx.trial;
  row.n = ctx.n;
  row.seed = ctx.noise_seed;
  absl::StatusOr<Problem> problem =
      MakeProblem(config.problem, config.dim, config.perturbation_bound,
                  ctx.data_seed, config.cubic_scale);
  if (!problem.ok()) {
    row.status = CleanStatus(problem.status());
    return row;
  }
  absl::StatusOr<Dataset> dataset =
      MakeDataset(*problem, static_cast<int>(ctx.n), ctx.data_seed);
  if (!dataset.ok()) {
    row.status = CleanStatus(dataset.status());
    return row;
  }
  const ObjectiveSpec spec =
      ProblemConstants(*problem, config.diameter, config.rho_floor);
  Ledger ledger({config.epsilon, config.delta}, config.strict_ledger);
  Rng rng(ctx.noise_seed);
  Vector point;
  if (packing) {
    const double r = config.packing_radius > 0
                         ? config.packing_radius
                         : DefaultPackingRadius(config.diameter, config.dim,
                                                config.epsilon, ctx.n);
    absl::StatusOr<Packing> net = BuildPacking(config.dim, config.diameter, r);
    if (!net.ok()) {
      row.status = CleanStatus(net.status());
      return row;
    }
    absl::StatusOr<DiscreteSelection> pick =
        DiscreteEmSelect(*net, *problem, *dataset, config.epsilon,
                         spec.lipschitz, config.diameter, rng, &ledger);
    FillLedger(ledger, row);
    if (!pick.ok()) {
      row.status = CleanStatus(pick.status());
      return row;
    }
    row.selected_index = pick->index;
    row.iterations = static_cast<int64_t>(net->centers.size());
    point = pick->point;
  } else {
    EmKnobs knobs;
    knobs.c_eta = config.em_c_eta;
    knobs.c_steps = config.em_c_steps;
    knobs.steps_override = config.em_steps;
    absl::StatusOr<EmRunResult> run =
        RunExponentialMechanism(*problem, *dataset, spec,
                                {config.epsilon, config.delta}, knobs, rng,
                                &ledger);
    FillLedger(ledger, row);
    if (!run.ok()) {
      row.status = CleanStatus(run.status());
      return row;
    }
    row.iterations = run->config.steps;
    row.o1_calls = run->stats.potential_evals;
    point = run->point;
  }
  row.termination = "completed";
  if (config.dim <= 2) {
    absl::StatusOr<EmRiskReport> risk = EmExcessRiskReport(
        {point}, *problem, *dataset, 0.0, config.diameter);
    if (risk.ok()) {
      row.excess_empirical = risk->empirical_excess;
      row.excess_population = risk->population_excess;
    }
  }
  const Vector z_mean = dataset->samples.rowwise().mean();
  row.grad_norm = (BaseGradient(*problem, point) + z_mean).norm();
  return row;
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t k = v.size();
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// Linear-interpolation quantile of sorted data.
double Quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

nlohmann::json Stats(std::vector<double> v) {
  v.erase(std::remove_if(v.begin(), v.end(),
                         [](double x) { return !std::isfinite(x); }),
          v.end());
  if (v.empty()) return {{"count", 0}};
  std::sort(v.begin(), v.end());
  return {{"count", v.size()},      {"min", v.front()},
          {"q1", Quantile(v, 0.25)}, {"median", Quantile(v, 0.5)},
          {"q3", Quantile(v, 0.75)}, {"max", v.back()}};
}

std::string OptionalCell(const std::optional<double>& v) {
  return v ? FormatDouble(*v) : "";
}

}  // namespace

const char* ExperimentKindName(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kSpiderEmpirical:
      return "spider_empirical";
    case ExperimentKind::kSpiderPopulation:
      return "spider_population";
    case ExperimentKind::kAboveThreshold:
      return "abovethreshold";
    case ExperimentKind::kEmContinuous:
      return "em_continuous";
    case ExperimentKind::kEmPacking:
      return "em_packing";
    case ExperimentKind::kRateScan:
      return "rate_scan";
  }
  return "unknown";
}

absl::StatusOr<ExperimentKind> ParseExperimentKind(absl::string_view name) {
  for (ExperimentKind kind :
       {ExperimentKind::kSpiderEmpirical, ExperimentKind::kSpiderPopulation,
        ExperimentKind::kAboveThreshold, ExperimentKind::kEmContinuous,
        ExperimentKind::kEmPacking, ExperimentKind::kRateScan}) {
    if (name == ExperimentKindName(kind)) return kind;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("unknown experiment kind '", name, "'"));
}

absl::Status ExperimentConfig::Validate() const {
  if (dim < 1) return absl::InvalidArgumentError("d must be >= 1");
  if (n < 2) return absl::InvalidArgumentError("n must be >= 2");
  if (trials < 0) return absl::InvalidArgumentError("trials must be >= 0");
  if (!(epsilon > 0)) return absl::InvalidArgumentError("epsilon must be > 0");
  if (!(delta > 0 && delta < 1)) {
    return absl::InvalidArgumentError("delta must lie in (0, 1)");
  }
  if (!(omega > 0 && omega < 1)) {
    return absl::InvalidArgumentError("omega must lie in (0, 1)");
  }
  if (!(spider_share > 0 && spider_share < 1)) {
    return absl::InvalidArgumentError("spider_share must lie in (0, 1)");
  }
  if (!(diameter > 0)) return absl::InvalidArgumentError("diameter must be > 0");
  if (!(perturbation_bound >= 0)) {
    return absl::InvalidArgumentError("perturbation_bound must be >= 0");
  }
  if (!x0.empty() && static_cast<int>(x0.size()) != dim) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "x0 has %d coordinates but d = %d", x0.size(), dim));
  }
  if (candidates < 1) return absl::InvalidArgumentError("candidates must be >= 1");
  if (experiment == ExperimentKind::kRateScan) {
    if (n_list.size() < 2) {
      return absl::InvalidArgumentError("rate_scan needs at least two n");
    }
    for (int64_t v : n_list) {
      if (v < 2) return absl::InvalidArgumentError("n_list entries must be >= 2");
    }
  }
  return absl::OkStatus();
}

absl::Status ApplyOverride(ExperimentConfig& config, absl::string_view key,
                           absl::string_view value) {
  for (const KeySpec& spec : Keys()) {
    if (key == spec.key) return spec.set(config, value);
  }
  return absl::InvalidArgumentError(absl::StrCat("unknown config key '", key, "'"));
}

absl::StatusOr<ExperimentConfig> ParseConfig(absl::string_view text) {
  ExperimentConfig config;
  int line_no = 0;
  for (absl::string_view line : absl::StrSplit(text, '\n')) {
    ++line_no;
    line = absl::StripAsciiWhitespace(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') {
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == absl::string_view::npos) {
      return absl::InvalidArgumentError(
          absl::StrFormat("config line %d has no '='", line_no));
    }
    const absl::string_view key = absl::StripAsciiWhitespace(line.substr(0, eq));
    const absl::string_view value =
        absl::StripAsciiWhitespace(line.substr(eq + 1));
    if (absl::Status s = ApplyOverride(config, key, value); !s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrFormat("config line %d: %s", line_no, s.message()));
    }
  }
  return config;
}

std::string SerializeConfig(const ExperimentConfig& config) {
  std::string out;
  for (const KeySpec& spec : Keys()) {
    absl::StrAppend(&out, spec.key, " = ", spec.get(config), "\n");
  }
  return out;
}

absl::StatusOr<double> FitLogLogSlope(const std::vector<double>& x,
                                      const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    return absl::InvalidArgumentError("slope fit needs >= 2 paired points");
  }
  Matrix a(static_cast<Eigen::Index>(x.size()), 2);
  Vector b(static_cast<Eigen::Index>(x.size()));
  for (size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) {
      return absl::InvalidArgumentError("log-log fit needs positive data");
    }
    a(static_cast<Eigen::Index>(i), 0) = 1;
    a(static_cast<Eigen::Index>(i), 1) = std::log(x[i]);
    b(static_cast<Eigen::Index>(i)) = std::log(y[i]);
  }
  const Vector coef = a.colPivHouseholderQr().solve(b);
  return coef(1);
}

absl::StatusOr<ResultsTable> RunExperiment(const ExperimentConfig& config,
                                           int jobs) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  const auto start = std::chrono::steady_clock::now();
  ResultsTable table;
  table.config = config;

  std::vector<int64_t> sizes = {config.n};
  if (config.experiment == ExperimentKind::kRateScan) sizes = config.n_list;
  const int64_t total = config.trials * static_cast<int64_t>(sizes.size());
  table.rows.resize(static_cast<size_t>(total));

  auto run_one = [&](int64_t index) {
    TrialContext ctx;
    ctx.config = &config;
    ctx.n = sizes[static_cast<size_t>(index / config.trials)];
    ctx.trial = index % config.trials;
    ctx.data_seed = DeriveSeed(config.seed, 2 * static_cast<uint64_t>(index));
    ctx.noise_seed =
        DeriveSeed(config.seed, 2 * static_cast<uint64_t>(index) + 1);
    ResultRow row;
    switch (config.experiment) {
      case ExperimentKind::kSpiderEmpirical:
      case ExperimentKind::kRateScan:
        row = SpiderTrial(ctx, OracleMode::kEmpirical);
        break;
      case ExperimentKind::kSpiderPopulation:
        row = SpiderTrial(ctx, OracleMode::kPopulation);
        break;
      case ExperimentKind::kAboveThreshold:
        row = AboveThresholdTrial(ctx);
        break;
      case ExperimentKind::kEmContinuous:
        row = EmTrial(ctx, false);
        break;
      case ExperimentKind::kEmPacking:
        row = EmTrial(ctx, true);
        break;
    }
    row.experiment = ExperimentKindName(config.experiment);
    table.rows[static_cast<size_t>(index)] = std::move(row);
  };

  std::atomic<int64_t> next{0};
  auto worker = [&] {
    for (int64_t i = next++; i < total; i = next++) run_one(i);
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(
                                                          std::max<int64_t>(total, 1))));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  if (config.experiment == ExperimentKind::kRateScan) {
    std::vector<double> xs, ys;
    for (int64_t n : sizes) {
      std::vector<double> values;
      for (const ResultRow& row : table.rows) {
        if (row.n == n && row.grad_norm) values.push_back(*row.grad_norm);
      }
      if (values.empty()) continue;
      const double median = Median(values);
      table.medians.push_back({n, median});
      xs.push_back(static_cast<double>(n));
      ys.push_back(median);
    }
    absl::StatusOr<double> slope = FitLogLogSlope(xs, ys);
    if (slope.ok()) {
      table.fit_slope = *slope;
      for (ResultRow& row : table.rows) row.fit_slope = *slope;
    }
  }
  table.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return table;
}

std::string ResultsToCsv(const ResultsTable& table) {
  std::string out = absl::StrCat(kResultsHeader, "\n");
  for (const ResultRow& r : table.rows) {
    std::vector<std::string> cells = {
        r.experiment,
        absl::StrCat(r.trial),
        absl::StrCat(r.n),
        absl::StrCat(r.seed),
        r.status,
        OptionalCell(r.grad_norm),
        OptionalCell(r.smin),
        OptionalCell(r.alpha_grad),
        OptionalCell(r.smin_floor),
        r.is_sosp ? (*r.is_sosp ? "true" : "false") : "",
        OptionalCell(r.excess_empirical),
        OptionalCell(r.excess_population),
        FormatDouble(r.eps_spent),
        FormatDouble(r.delta_spent),
        FormatDouble(r.eps_budget),
        FormatDouble(r.delta_budget),
        absl::StrCat(r.o1_calls),
        absl::StrCat(r.o2_calls),
        r.selected_index ? absl::StrCat(*r.selected_index) : "",
        absl::StrCat(r.iterations),
        r.termination,
        OptionalCell(r.fit_slope)};
    absl::StrAppend(&out, absl::StrJoin(cells, ","), "\n");
  }
  return out;
}

nlohmann::json Summarize(const ResultsTable& table) {
  std::vector<double> grad, smin, emp, pop, eps;
  int64_t ok = 0, sosp = 0, certified = 0;
  double max_eps = 0, max_delta = 0;
  nlohmann::json failures = nlohmann::json::array();
  for (const ResultRow& r : table.rows) {
    if (r.status == "ok") {
      ++ok;
    } else {
      failures.push_back({{"trial", r.trial}, {"n", r.n}, {"status", r.status}});
    }
    if (r.grad_norm) grad.push_back(*r.grad_norm);
    if (r.smin) smin.push_back(*r.smin);
    if (r.excess_empirical) emp.push_back(*r.excess_empirical);
    if (r.excess_population) pop.push_back(*r.excess_population);
    eps.push_back(r.eps_spent);
    if (r.is_sosp) {
      ++certified;
      if (*r.is_sosp) ++sosp;
    }
    max_eps = std::max(max_eps, r.eps_spent);
    max_delta = std::max(max_delta, r.delta_spent);
  }
  nlohmann::json config = nlohmann::json::object();
  for (const KeySpec& spec : Keys()) config[spec.key] = spec.get(table.config);
  nlohmann::json j = {
      {"experiment", ExperimentKindName(table.config.experiment)},
      {"config", config},
      {"trial_count", table.rows.size()},
      {"ok_count", ok},
      {"failures", failures},
      {"grad_norm", Stats(grad)},
      {"smin", Stats(smin)},
      {"excess_empirical", Stats(emp)},
      {"excess_population", Stats(pop)},
      {"eps_spent", Stats(eps)},
      {"certified_count", certified},
      {"sosp_count", sosp},
      {"max_eps_spent", max_eps},
      {"max_delta_spent", max_delta},
      {"budget", {{"epsilon", table.config.epsilon},
                  {"delta", table.config.delta}}}};
  nlohmann::json medians = nlohmann::json::array();
  for (const auto& [n, m] : table.medians) {
    medians.push_back({{"n", n}, {"median_grad_norm", m}});
  }
  j["medians"] = medians;
  j["fit_slope"] =
      table.fit_slope ? nlohmann::json(*table.fit_slope) : nlohmann::json(nullptr);
  return j;
}

std::string RenderSvg(const ResultsTable& table) {
  constexpr double kWidth = 640, kHeight = 480, kPad = 60;
  std::string svg = absl::StrFormat(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
      "viewBox=\"0 0 %d %d\">\n<rect width=\"100%%\" height=\"100%%\" "
      "fill=\"white\"/>\n",
      static_cast<int>(kWidth), static_cast<int>(kHeight),
      static_cast<int>(kWidth), static_cast<int>(kHeight));
  auto axis = [&](const std::string& xlabel, const std::string& ylabel) {
    absl::StrAppendFormat(
        &svg,
        "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
        "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
        "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%s</text>\n"
        "<text x=\"15\" y=\"%g\" transform=\"rotate(-90 15 %g)\" "
        "text-anchor=\"middle\">%s</text>\n",
        kPad, kHeight - kPad, kWidth - kPad, kHeight - kPad, kPad, kPad, kPad,
        kHeight - kPad, kWidth / 2, kHeight - 20, xlabel, kHeight / 2,
        kHeight / 2, ylabel);
  };
  const char* palette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                           "#66a61e", "#e6ab02", "#a6761d", "#666666"};

  if (table.config.experiment == ExperimentKind::kRateScan) {
    std::vector<double> lx, ly;
    for (const ResultRow& r : table.rows) {
      if (r.grad_norm && *r.grad_norm > 0) {
        lx.push_back(std::log10(static_cast<double>(r.n)));
        ly.push_back(std::log10(*r.grad_norm));
      }
    }
    axis("log10 n", "log10 certified gradient norm");
    if (!lx.empty()) {
      const auto [xmin, xmax] = std::minmax_element(lx.begin(), lx.end());
      const auto [ymin, ymax] = std::minmax_element(ly.begin(), ly.end());
      const double x0 = *xmin - 0.1, x1 = *xmax + 0.1;
      const double y0 = *ymin - 0.1, y1 = *ymax + 0.1;
      auto px = [&](double v) {
        return kPad + (v - x0) / (x1 - x0) * (kWidth - 2 * kPad);
      };
      auto py = [&](double v) {
        return kHeight - kPad - (v - y0) / (y1 - y0) * (kHeight - 2 * kPad);
      };
      int series = 0;
      for (int64_t n : table.config.n_list) {
        absl::StrAppendFormat(&svg, "<g class=\"series\" data-n=\"%d\" fill=\"%s\">\n",
                              n, palette[series++ % 8]);
        for (const ResultRow& r : table.rows) {
          if (r.n != n || !r.grad_norm || !(*r.grad_norm > 0)) continue;
          absl::StrAppendFormat(
              &svg, "<circle cx=\"%.3f\" cy=\"%.3f\" r=\"3\"/>\n",
              px(std::log10(static_cast<double>(n))),
              py(std::log10(*r.grad_norm)));
        }
        svg += "</g>\n";
      }
      if (table.fit_slope && !table.medians.empty()) {
        // Line through the centroid of the log medians.
        double cx = 0, cy = 0;
        for (const auto& [n, m] : table.medians) {
          cx += std::log10(static_cast<double>(n));
          cy += std::log10(m);
        }
        cx /= static_cast<double>(table.medians.size());
        cy /= static_cast<double>(table.medians.size());
        const double s = *table.fit_slope;
        absl::StrAppendFormat(
            &svg,
            "<line class=\"fit\" x1=\"%.3f\" y1=\"%.3f\" x2=\"%.3f\" "
            "y2=\"%.3f\" stroke=\"black\" stroke-dasharray=\"6 3\"/>\n"
            "<text x=\"%g\" y=\"%g\">slope %.3f</text>\n",
            px(x0), py(cy + s * (x0 - cx)), px(x1), py(cy + s * (x1 - cx)),
            kWidth - 2 * kPad, kPad, s);
      }
    }
  } else {
    const bool sampler = table.config.experiment == ExperimentKind::kEmContinuous ||
                         table.config.experiment == ExperimentKind::kEmPacking;
    std::vector<double> values;
    for (const ResultRow& r : table.rows) {
      const std::optional<double>& v = sampler ? r.excess_empirical : r.grad_norm;
      if (v && std::isfinite(*v)) values.push_back(*v);
    }
    axis(sampler ? "empirical excess risk" : "gradient norm at output",
         "count");
    if (!values.empty()) {
      constexpr int kBins = 20;
      const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
      const double lo = *lo_it;
      const double hi = *hi_it > lo ? *hi_it : lo + 1;
      std::vector<int> counts(kBins, 0);
      for (double v : values) {
        int bin = static_cast<int>((v - lo) / (hi - lo) * kBins);
        counts[static_cast<size_t>(std::clamp(bin, 0, kBins - 1))]++;
      }
      const int peak = *std::max_element(counts.begin(), counts.end());
      const double bar = (kWidth - 2 * kPad) / kBins;
      svg += "<g class=\"histogram\" fill=\"#7570b3\">\n";
      for (int i = 0; i < kBins; ++i) {
        const double h = (kHeight - 2 * kPad) * counts[i] / peak;
        absl::StrAppendFormat(
            &svg, "<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\"/>\n",
            kPad + i * bar, kHeight - kPad - h, bar * 0.9, h);
      }
      svg += "</g>\n";
      absl::StrAppendFormat(&svg,
                            "<text x=\"%g\" y=\"%g\">%.4g</text>\n"
                            "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.4g</text>\n",
                            kPad, kHeight - kPad + 15, lo, kWidth - kPad,
                            kHeight - kPad + 15, hi);
    }
  }
  svg += "</svg>\n";
  return svg;
}

absl::Status EmitReport(const ResultsTable& table, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    return absl::UnavailableError(
        absl::StrCat("cannot create ", dir, ": ", ec.message()));
  }
  const std::vector<std::pair<std::string, std::string>> files = {
      {"results.csv", ResultsToCsv(table)},
      {"summary.json", Summarize(table).dump(2) + "\n"},
      {"plots.svg", RenderSvg(table)},
      {"config.ini", SerializeConfig(table.config)},
      {"timing.json",
       nlohmann::json({{"runtime_seconds", table.runtime_seconds}}).dump(2) +
           "\n"}};
  for (const auto& [name, body] : files) {
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream stream(path, std::ios::binary | std::ios::trunc);
    if (!stream) {
      return absl::UnavailableError(
          absl::StrCat("cannot open ", path, ": ", std::strerror(errno)));
    }
    stream << body;
    stream.close();
    if (!stream) {
      return absl::UnavailableError(
          absl::StrCat("write failed for ", path, ": ", std::strerror(errno)));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<VerifyReport> VerifyResultsCsv(absl::string_view text) {
  std::vector<absl::string_view> lines =
      absl::StrSplit(text, '\n', absl::SkipEmpty());
  if (lines.empty() || lines[0] != kResultsHeader) {
    return absl::InvalidArgumentError("results.csv header does not match");
  }
  const std::vector<std::string> names = absl::StrSplit(kResultsHeader, ',');
  std::map<std::string, size_t> column;
  for (size_t i = 0; i < names.size(); ++i) column[names[i]] = i;

  VerifyReport report;
  for (size_t li = 1; li < lines.size(); ++li) {
    std::vector<absl::string_view> cells = absl::StrSplit(lines[li], ',');
    if (cells.size() != names.size()) {
      report.failures.push_back(absl::StrFormat("row %d: wrong column count", li));
      continue;
    }
    ++report.rows;
    auto cell = [&](const char* name) { return cells[column[name]]; };
    auto number = [&](const char* name, double& out) {
      return absl::SimpleAtod(cell(name), &out);
    };
    double eps = 0, delta = 0, eps_budget = 0, delta_budget = 0;
    if (!number("eps_spent", eps) || !number("delta_spent", delta) ||
        !number("eps_budget", eps_budget) ||
        !number("delta_budget", delta_budget)) {
      report.failures.push_back(absl::StrFormat("row %d: bad ledger cells", li));
      continue;
    }
    if (eps > eps_budget * (1 + 1e-9) || delta > delta_budget * (1 + 1e-9)) {
      report.failures.push_back(absl::StrFormat(
          "row %d: ledger (%g, %g) exceeds budget (%g, %g)", li, eps, delta,
          eps_budget, delta_budget));
    }
    const absl::string_view flag = cell("is_sosp");
    if (flag.empty()) continue;
    double grad = 0, smin = 0, alpha = 0, floor = 0;
    if (!number("grad_norm", grad) || !number("smin", smin) ||
        !number("alpha_grad", alpha) || !number("smin_floor", floor)) {
      report.failures.push_back(
          absl::StrFormat("row %d: certificate cells missing", li));
      continue;
    }
    ++report.checked_certificates;
    const bool expected = grad <= alpha && smin >= floor;
    if ((flag == "true") != expected) {
      report.failures.push_back(absl::StrFormat(
          "row %d: is_sosp=%s but grad %.17g vs %.17g, smin %.17g vs %.17g",
          li, flag, grad, alpha, smin, floor));
    }
  }
  return report;
}

}  // namespace dpnc
