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

// Experiment runner: flat key=value configs, seeded trials, CSV / JSON / SVG
// reports and an offline certificate checker.

#ifndef DPNC_HARNESS_H_
#define DPNC_HARNESS_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "dpnc/objective.h"
#include "dpnc/spider.h"
#include "nlohmann/json.hpp"

namespace dpnc {

enum class ExperimentKind {
  kSpiderEmpirical,
  kSpiderPopulation,
  kAboveThreshold,
  kEmContinuous,
  kEmPacking,
  kRateScan,
};

const char* ExperimentKindName(ExperimentKind kind);
absl::StatusOr<ExperimentKind> ParseExperimentKind(absl::string_view name);

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kSpiderEmpirical;
  ProblemKind problem = ProblemKind::kCubicSaddle;
  int dim = 2;
  int64_t n = 4096;
  double perturbation_bound = 0.1;
  double cubic_scale = 1.0;
  double diameter = 4.0;
  double rho_floor = 1e-3;
  double epsilon = 1.0;
  double delta = 1e-6;
  double omega = 0.05;
  uint64_t seed = 1;
  int64_t trials = 10;
  // Fraction of epsilon given to the Spider phase; the selector gets the
  // rest.
  double spider_share = 0.5;
  // Empty means the origin.
  std::vector<double> x0;
  bool strict_ledger = true;

  SpiderKnobs knobs;

  // abovethreshold: number of random candidates, and whether the exact
  // minimizer of F_D is planted among them.
  int64_t candidates = 100;
  bool plant_minimizer = true;
  double selector_alpha = 0.05;

  // em_continuous.
  double em_c_eta = 1.0;
  double em_c_steps = 1.0;
  std::optional<int64_t> em_steps;
  // em_packing; 0 selects D d / (eps n).
  double packing_radius = 0;

  // rate_scan.
  std::vector<int64_t> n_list = {1024, 2048, 4096, 8192, 16384};

  std::string out = "out";

  absl::Status Validate() const;
};

// Flat "key = value" text, one key per line, '#' comments allowed.
absl::StatusOr<ExperimentConfig> ParseConfig(absl::string_view text);
absl::Status ApplyOverride(ExperimentConfig& config, absl::string_view key,
                           absl::string_view value);
// Every key in a fixed order; ParseConfig(SerializeConfig(c)) reproduces c.
std::string SerializeConfig(const ExperimentConfig& config);

// One trial. Absent values are written as empty CSV cells.
struct ResultRow {
  std::string experiment;
  int64_t trial = 0;
  int64_t n = 0;
  uint64_t seed = 0;
  std::string status = "ok";
  std::optional<double> grad_norm;
  std::optional<double> smin;
  // Certificate: is_sosp == (grad_norm <= alpha_grad && smin >= smin_floor).
  std::optional<double> alpha_grad;
  std::optional<double> smin_floor;
  std::optional<bool> is_sosp;
  std::optional<double> excess_empirical;
  std::optional<double> excess_population;
  double eps_spent = 0;
  double delta_spent = 0;
  double eps_budget = 0;
  double delta_budget = 0;
  int64_t o1_calls = 0;
  int64_t o2_calls = 0;
  std::optional<int64_t> selected_index;
  int64_t iterations = 0;
  std::string termination;
  std::optional<double> fit_slope;
};

struct ResultsTable {
  ExperimentConfig config;
  std::vector<ResultRow> rows;
  // rate_scan: median grad_norm per n and the fitted log-log slope.
  std::vector<std::pair<int64_t, double>> medians;
  std::optional<double> fit_slope;
  double runtime_seconds = 0;  // kept out of the deterministic reports
};

// Runs every trial. Trial i uses data seed DeriveSeed(seed, 2 i) and noise
// seed DeriveSeed(seed, 2 i + 1); results do not depend on `jobs`.
absl::StatusOr<ResultsTable> RunExperiment(const ExperimentConfig& config,
                                           int jobs = 1);

// Least-squares slope of log(y) against log(x).
absl::StatusOr<double> FitLogLogSlope(const std::vector<double>& x,
                                      const std::vector<double>& y);

inline constexpr char kResultsHeader[] =
    "experiment,trial,n,seed,status,grad_norm,smin,alpha_grad,smin_floor,"
    "is_sosp,excess_empirical,excess_population,eps_spent,delta_spent,"
    "eps_budget,delta_budget,o1_calls,o2_calls,selected_index,iterations,"
    "termination,fit_slope";

std::string ResultsToCsv(const ResultsTable& table);
nlohmann::json Summarize(const ResultsTable& table);
std::string RenderSvg(const ResultsTable& table);

// Writes results.csv, summary.json, plots.svg and config.ini into `dir`,
// plus timing.json, the only file that varies between identical runs.
absl::Status EmitReport(const ResultsTable& table, const std::string& dir);

struct VerifyReport {
  int64_t rows = 0;
  int64_t checked_certificates = 0;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

// Re-derives every SOSP flag and budget check from a results.csv body.
absl::StatusOr<VerifyReport> VerifyResultsCsv(absl::string_view text);

}  // namespace dpnc

#endif  // DPNC_HARNESS_H_
