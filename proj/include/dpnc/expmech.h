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

// Regularized exponential mechanism: sampling from
//
//   pi(x) ~ exp(-beta (F_D(x) + mu |x|^2 / 2))   on the ball of diameter D
//
// by alternating a forward Gaussian step with an exact restricted-Gaussian
// rejection sampler.

#ifndef DPNC_EXPMECH_H_
#define DPNC_EXPMECH_H_

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpnc/objective.h"
#include "dpnc/privacy.h"
#include "dpnc/random.h"
#include "nlohmann/json.hpp"

namespace dpnc {

struct EmKnobs {
  double c_eta = 1.0;
  double c_steps = 1.0;
  double renyi_order = 1.0;  // q
  double beta_lo = 1e-8;
  // Replaces the derived step count when set.
  std::optional<int64_t> steps_override;
  int64_t max_steps = 10'000'000;

  nlohmann::json ToJson() const;
};

struct EMConfig {
  double beta = 0;
  double mu = 0;
  double c_lsi = 0;
  double eta = 0;
  int64_t steps = 0;           // T
  double steps_theory = 0;     // T before any override, possibly huge
  double delta_inner = 0;
  double renyi_order = 1.0;
  double potential_lipschitz = 0;  // beta (G + mu D / 2)
  double epsilon_certified = 0;    // bound evaluated at (beta, c_lsi)
  std::vector<std::string> warnings;

  nlohmann::json ToJson() const;
};

// Largest beta in [beta_lo, 700 / (G D)] with
//   LsiDpEpsilon(G, beta, n, StroockClsi(beta, d / (D^2 beta), G, D), delta)
//     <= epsilon,
// found by bisection; mu = d / (D^2 beta). Then
//   eta = c_eta / (L^2 ln(1 / delta_inner)),   L = beta (G + mu D / 2),
//   T   = ceil(c_T (C_lsi / eta) ln(exp(q beta G D) / delta^2)),
//   delta_inner = delta / (2T),
// iterated to a fixed point.
absl::StatusOr<EMConfig> ChooseEmParams(double epsilon, double delta,
                                        double lipschitz, double diameter,
                                        int64_t n, int dim,
                                        const EmKnobs& knobs = {});

// Potential U over a ball domain (radius = +inf means all of R^d).
struct Target {
  int dim = 1;
  double radius = std::numeric_limits<double>::infinity();
  std::function<double(const Vector&)> potential;
  // Upper bound on |grad U| over the intersection of the domain with the
  // ball B(center, r).
  std::function<double(const Vector& center, double r)> local_lipschitz;

  bool Contains(const Vector& x) const { return x.norm() <= radius; }
};

// U(x) = beta (F_D(x) + mu |x|^2 / 2) on the ball of the given diameter.
Target MakeGibbsTarget(const Problem& problem, const Dataset& dataset,
                       double beta, double mu, double diameter);
// U = 0 on R^d.
Target ZeroTarget(int dim);
// U(x) = scale |x|^2 / 2, on a ball or on R^d.
Target QuadraticTarget(int dim, double scale,
                       double radius = std::numeric_limits<double>::infinity());

struct SamplerOptions {
  int64_t max_attempts = 100000;
  double acceptance_floor = 1e-4;
};

struct SamplerStats {
  int64_t calls = 0;
  int64_t attempts = 0;
  int64_t potential_evals = 0;

  double AcceptRate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(calls) / attempts;
  }
};

// Rejection sampler for the density
//   ~ exp(-U(x) - |x - y|^2 / (2 eta))   restricted to the domain.
// Proposals are N(c, eta I) with c the projection of y onto the domain;
// out-of-domain proposals are discarded and the rest are accepted with
// probability exp(-(U(x) - L) - <x - c, c - y> / eta), where L is a lower
// bound of U on B(c, 6 sqrt(eta d)). Fails with RESOURCE_EXHAUSTED
// ("rejection stall") when no proposal is accepted within max_attempts.
absl::StatusOr<Vector> RestrictedGaussianSample(
    const Target& target, const Vector& y, double eta, Rng& rng,
    const SamplerOptions& options = {}, SamplerStats* stats = nullptr);

bool IsRejectionStall(const absl::Status& status);

struct ChainStep {
  int64_t t = 0;
  double accept_rate = 0;
  Vector x;
};

// T alternations of y = x + sqrt(eta) zeta, x = RestrictedGaussianSample(y).
// `history`, when given, receives one entry per step.
absl::StatusOr<Vector> AlternateSample(const Target& target, const Vector& x0,
                                       double eta, int64_t steps, Rng& rng,
                                       const SamplerOptions& options = {},
                                       SamplerStats* stats = nullptr,
                                       std::vector<ChainStep>* history =
                                           nullptr);

// Draw from exp(-beta mu |x|^2 / 2) restricted to the target's domain.
absl::StatusOr<Vector> InitialDraw(const Target& target, double beta_mu,
                                   Rng& rng);

// Rows "chain_id,t,accept_rate,x0,...,x{d-1}".
std::string ChainDiagnosticsCsv(
    const std::vector<std::vector<ChainStep>>& chains, int dim);

struct EmRunResult {
  EMConfig config;
  Vector point;
  SamplerStats stats;
};

// Full private pipeline: parameter choice, certificate check, one chain from
// the initial law. Charges (epsilon, delta) as "em/continuous".
absl::StatusOr<EmRunResult> RunExponentialMechanism(
    const Problem& problem, const Dataset& dataset, const ObjectiveSpec& spec,
    const Budget& budget, const EmKnobs& knobs, Rng& rng,
    Ledger* ledger = nullptr);

struct EmRiskReport {
  double mean_empirical_risk = 0;
  double mean_population_risk = 0;
  // Excess over the grid-search minimum of F_D, of F_D + mu |x|^2 / 2 and
  // of F_P; only for d <= 2.
  std::optional<double> empirical_excess;
  std::optional<double> regularized_excess;
  std::optional<double> population_excess;
  double empirical_stderr = 0;
  double population_stderr = 0;
  int64_t count = 0;
};

absl::StatusOr<EmRiskReport> EmExcessRiskReport(
    const std::vector<Vector>& samples, const Problem& problem,
    const Dataset& dataset, double mu, double diameter);

}  // namespace dpnc

#endif  // DPNC_EXPMECH_H_
