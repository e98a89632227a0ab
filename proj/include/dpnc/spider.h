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

// Drift-controlled stochastic Spider for second-order stationary points.
//
// Each iteration picks one of three gradient estimates:
//   reanchor        |grad_{t-1}| <= threshold and the frozen counter has run
//                   out: fresh O1 call plus an isotropic exploration kick,
//                   then freeze for Gamma iterations;
//   large_drift_o1  accumulated squared movement reached kappa: fresh O1;
//   o2              otherwise: grad_t = grad_{t-1} + O2(x_t, x_{t-1}).
// The iterate moves by -eta * grad_t and the drift grows by
// eta^2 |grad_t|^2.

#ifndef DPNC_SPIDER_H_
#define DPNC_SPIDER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpnc/objective.h"
#include "dpnc/oracle.h"
#include "dpnc/privacy.h"
#include "dpnc/random.h"
#include "nlohmann/json.hpp"

namespace dpnc {

// Constants hidden in the big-O statements, all tunable.
struct SpiderKnobs {
  double c_gamma = 1;           // universal constant C inside gamma
  double c_freeze = 1;          // multiplies Gamma
  double c_iterations = 1;      // multiplies T
  double c_threshold = 1;       // multiplies the re-anchor threshold
  double threshold_exponent = 3;
  // Multiplier on the large-drift count bound B eta / kappa + T gamma^2
  // eta^2 / kappa used to size privacy reservations and sample budgets.
  double c_drift_count = 10;
  // Norm-subGaussian constant for population-mode sampling error.
  double c_zeta = 1;
  // Multiplies the population batch sizes b1, b2.
  double batch_scale = 1;
  // When false every polylogarithmic factor is replaced by 1.
  bool polylog = true;
  // A run stops as diverged once |x| exceeds divergence_factor * D.
  double divergence_factor = 1e3;
  // Refuse configurations with more iterations than this.
  int64_t max_iterations = 50'000'000;
  std::optional<int64_t> iterations_override;
  std::optional<int64_t> freeze_override;

  nlohmann::json ToJson() const;
};

struct SpiderConfig {
  double gamma = 0;
  int64_t freeze = 1;  // Gamma
  double eta = 0;
  int64_t iterations = 0;  // T
  double kappa = 0;
  double omega = 0;
  double threshold = 0;  // re-anchor test on |grad_{t-1}|
  double alpha = 0;      // SOSP level the output set is guaranteed to contain
  double zeta1 = 0;
  double zeta2 = 0;
  double diameter = 0;
  SpiderKnobs knobs;
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
};

// Natural log clamped below at 1 (argument < e is treated as e), or exactly 1
// when polylog factors are disabled.
double PolyLog(double argument, bool polylog);

// gamma = sqrt(4 C (zeta2^2 kappa + 4 zeta1^2) ln(BMd / (rho omega)))
// Gamma = ceil(M ln(dMB / (rho gamma omega)) / sqrt(rho gamma))
// T     = ceil(B M ln^4(dMB / (rho gamma omega)) / gamma^2)
// eta   = 1 / M, threshold = gamma ln^3(BMd / (rho omega)).
// `noiseless` permits zero zetas; T must then come from the knobs.
absl::StatusOr<SpiderConfig> DeriveConfig(const ObjectiveSpec& spec,
                                          double zeta1, double zeta2,
                                          double kappa, double omega,
                                          const SpiderKnobs& knobs,
                                          bool noiseless = false);

enum class Branch { kReanchor, kLargeDrift, kSecondOrder };
const char* BranchName(Branch branch);

struct SpiderState {
  int64_t t = 0;
  Vector x;
  Vector x_prev;
  Vector grad_prev;  // grad_{t-1}
  double drift = 0;
  int64_t frozen = 0;
};

// Fresh state at x0: grad_{-1} = 0, frozen_{-1} = 0, drift_0 = kappa, so the
// first iteration re-anchors.
SpiderState InitialState(const Vector& x0, const SpiderConfig& config);

struct StepRecord {
  int64_t t = 0;
  Branch branch = Branch::kReanchor;
  double grad_est_norm = 0;
  double drift_entry = 0;  // drift_{t-1} when the branch was chosen
  double drift = 0;        // drift_t after accumulation
  int64_t frozen = 0;
  std::optional<double> true_grad_norm;
  std::optional<double> estimate_error;  // |grad_t - grad F(x_t)|
  double eps_spent = 0;  // cumulative per-access epsilon, pre-composition
};

// Applies one iteration to `state` in place and returns its record.
absl::StatusOr<StepRecord> SpiderStep(SpiderState& state,
                                      GradientOracle& oracle,
                                      const SpiderConfig& config, Rng& rng);

enum class Termination { kCompleted, kDataExhausted, kDiverged };
const char* TerminationName(Termination termination);

struct Trace {
  std::vector<StepRecord> steps;
  std::vector<Vector> points;  // x_0, ..., x_T
  Termination termination = Termination::kCompleted;
  int64_t large_drift_count = 0;
  int64_t reanchor_count = 0;
};

// Exact gradient of the objective, used only for diagnostics.
using GradientProbe = std::function<Vector(const Vector&)>;

// Runs config.iterations steps, or until the oracle runs out of data or the
// iterate diverges. The probe never influences the dynamics.
absl::StatusOr<Trace> SpiderRun(const Vector& x0, GradientOracle& oracle,
                                const SpiderConfig& config, Rng& rng,
                                const GradientProbe& probe = nullptr);

struct TheoremParameters {
  OracleParams oracle;
  double kappa = 0;
  double expected_alpha = 0;  // closed-form alpha_1 of the rate statement
  SpiderConfig config;
  // Sizes of the disjoint halves in population mode (D1 for Spider, D2 for
  // selection); empirical mode uses all n for both.
  int64_t first_split = 0;
  int64_t second_split = 0;
  // Bound on large-drift O1 calls, with knob constants.
  int64_t drift_count_bound = 0;
  std::vector<std::string> warnings;
};

// Noise scales, batch sizes and kappa from the rate theorems.
//   empirical:  kappa = G^{4/3} B^{1/3} / M^{5/3} (sqrt(d ln(1/delta)) /
//                       (n eps))^{2/3}
//               sigma1 = G sqrt(B eta ln^2(1/delta) / kappa)
//                        ln^2(ndMB / omega) / (n eps)
//               sigma2 = M sqrt(ln^2(1/delta) B M / alpha1^2)
//                        ln^5(ndMB / omega) / (n eps)
//   population: b1 = n kappa / (B eta), b2 = n alpha1^2 / (B M),
//               sigma1 = G sqrt(ln(1/delta)) / (b1 eps),
//               sigma2 = M sqrt(ln(1/delta)) / (b2 eps).
// sigma2 depends on alpha1, which depends on sigma2 through gamma; one
// fixed-point pass is taken from the closed-form alpha1.
absl::StatusOr<TheoremParameters> TheoremParams(const ObjectiveSpec& spec,
                                                const Budget& budget,
                                                OracleMode mode, int64_t n,
                                                double omega,
                                                const SpiderKnobs& knobs);

// Everything one private Spider run produces.
struct SpiderOutcome {
  Trace trace;
  TheoremParameters params;
  int64_t first_calls = 0;
  int64_t second_calls = 0;
  std::vector<int> consumed;  // population mode: indices served
};

// Runs Spider on `dataset` with theorem parameters at `budget`, charging
// `ledger`. Empirical mode reserves budget/2 for O1 calls and budget/2 for O2
// calls under advanced composition; population mode charges each group of
// disjoint batches once. In population mode only the indices in
// `sample_pool` are served.
absl::StatusOr<SpiderOutcome> RunPrivateSpider(
    const Problem& problem, const Dataset& dataset, const ObjectiveSpec& spec,
    const Budget& budget, OracleMode mode, double omega,
    const SpiderKnobs& knobs, const Vector& x0, Rng& rng, Ledger& ledger,
    std::vector<int> sample_pool = {}, const GradientProbe& probe = nullptr);

// CSV with columns t,branch,grad_est_norm,drift,frozen,true_grad_norm,
// eps_spent, preceded by one '# ' line holding the config as JSON.
std::string TraceToCsv(const Trace& trace, const SpiderConfig& config);

}  // namespace dpnc

#endif  // DPNC_SPIDER_H_
