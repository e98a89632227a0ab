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

#include "dpnc/expmech.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace dpnc {
namespace {

constexpr double kMaxExponent = 700.0;
constexpr char kStallPrefix[] = "rejection stall";
constexpr int kBisectionRounds = 200;
constexpr int kFixedPointRounds = 50;

double EpsilonAt(double beta, double lipschitz, double diameter, int64_t n,
                 int dim, double delta, double* c_lsi_out) {
  const double mu = dim / (diameter * diameter * beta);
  absl::StatusOr<double> c_lsi = StroockClsi(beta, mu, lipschitz, diameter);
  if (!c_lsi.ok()) return std::numeric_limits<double>::infinity();
  if (c_lsi_out != nullptr) *c_lsi_out = *c_lsi;
  return LsiDpEpsilon(lipschitz, beta, n, *c_lsi, delta);
}

Vector ProjectToBall(const Vector& y, double radius) {
  const double norm = y.norm();
  if (!std::isfinite(radius) || norm <= radius) return y;
  return y * (radius / norm);
}

}  // namespace

nlohmann::json EmKnobs::ToJson() const {
  nlohmann::json j = {{"c_eta", c_eta},
                      {"c_steps", c_steps},
                      {"renyi_order", renyi_order},
                      {"beta_lo", beta_lo},
                      {"max_steps", max_steps}};
  j["steps_override"] =
      steps_override ? nlohmann::json(*steps_override) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json EMConfig::ToJson() const {
  return {{"beta", beta},
          {"mu", mu},
          {"c_lsi", c_lsi},
          {"eta", eta},
          {"steps", steps},
          {"steps_theory", steps_theory},
          {"delta_inner", delta_inner},
          {"renyi_order", renyi_order},
          {"potential_lipschitz", potential_lipschitz},
          {"epsilon_certified", epsilon_certified},
          {"warnings", warnings}};
}

absl::StatusOr<EMConfig> ChooseEmParams(double epsilon, double delta,
                                        double lipschitz, double diameter,
                                        int64_t n, int dim,
                                        const EmKnobs& knobs) {
  if (!(epsilon > 0 && epsilon < 0.5) || !(delta > 0 && delta < 0.5)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "exponential mechanism needs epsilon, delta in (0, 1/2); got (%g, %g)",
        epsilon, delta));
  }
  if (!(lipschitz > 0 && diameter > 0) || n < 1 || dim < 1) {
    return absl::InvalidArgumentError(
        "exponential mechanism needs positive G, D, n, d");
  }
  const double lo0 = knobs.beta_lo;
  const double hi0 = kMaxExponent / (lipschitz * diameter);
  if (!(lo0 > 0 && lo0 < hi0)) {
    return absl::InvalidArgumentError("beta search interval is empty");
  }
  EMConfig config;
  config.renyi_order = knobs.renyi_order;
  if (EpsilonAt(lo0, lipschitz, diameter, n, dim, delta, nullptr) > epsilon) {
    return absl::FailedPreconditionError(absl::StrFormat(
        "ParamsInfeasible: no beta >= %g meets epsilon = %g", lo0, epsilon));
  }
  double beta = hi0;
  if (EpsilonAt(hi0, lipschitz, diameter, n, dim, delta, nullptr) > epsilon) {
    // Bisection in log space; `lo` always satisfies the bound.
    double lo = std::log(lo0), hi = std::log(hi0);
    for (int i = 0; i < kBisectionRounds && hi - lo > 1e-15; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (EpsilonAt(std::exp(mid), lipschitz, diameter, n, dim, delta,
                    nullptr) <= epsilon) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    beta = std::exp(lo);
    if (EpsilonAt(beta, lipschitz, diameter, n, dim, delta, nullptr) >
        epsilon) {
      beta = lo0;
    }
  } else {
    config.warnings.push_back(
        "beta capped where exp(beta G D) would overflow");
  }
  config.beta = beta;
  config.mu = dim / (diameter * diameter * beta);
  config.epsilon_certified = EpsilonAt(beta, lipschitz, diameter, n, dim,
                                       delta, &config.c_lsi);
  if (!(beta * lipschitz * diameter > dim)) {
    config.warnings.push_back(
        "beta G D <= d: the empirical utility bound does not apply");
  }

  config.potential_lipschitz =
      beta * (lipschitz + config.mu * diameter / 2);
  const double log_term =
      knobs.renyi_order * beta * lipschitz * diameter - 2 * std::log(delta);
  double delta_inner = delta / 2;
  double steps = 1;
  for (int i = 0; i < kFixedPointRounds; ++i) {
    const double l2 = config.potential_lipschitz * config.potential_lipschitz;
    config.eta = knobs.c_eta / (l2 * std::log(1 / delta_inner));
    steps = std::max(1.0, std::ceil(knobs.c_steps * (config.c_lsi / config.eta) *
                                    log_term));
    const double next = delta / (2 * steps);
    if (next == delta_inner) break;
    delta_inner = next;
  }
  config.delta_inner = delta_inner;
  config.steps_theory = steps;
  if (knobs.steps_override) {
    config.steps = *knobs.steps_override;
    config.warnings.push_back(absl::StrFormat(
        "step count overridden: %d instead of %g", config.steps, steps));
  } else if (steps > static_cast<double>(knobs.max_steps)) {
    return absl::ResourceExhaustedError(absl::StrFormat(
        "derived step count %g exceeds max_steps = %d; set steps_override",
        steps, knobs.max_steps));
  } else {
    config.steps = static_cast<int64_t>(steps);
  }
  return config;
}

Target MakeGibbsTarget(const Problem& problem, const Dataset& dataset,
                       double beta, double mu, double diameter) {
  const Vector z_mean = dataset.samples.rowwise().mean();
  const double radius = diameter / 2;
  // |grad F_D + mu x| over the ball of radius s, and the smoothness of F_D
  // on the whole domain.
  const ObjectiveSpec whole = ProblemConstants(problem, diameter);
  Target target;
  target.dim = problem.dim;
  target.radius = radius;
  target.potential = [problem, z_mean, beta, mu](const Vector& x) {
    return beta * (BaseValue(problem, x) + z_mean.dot(x) +
                   0.5 * mu * x.squaredNorm());
  };
  target.local_lipschitz = [problem, z_mean, beta, mu, radius,
                            whole](const Vector& center, double r) {
    const double s = std::min(center.norm() + r, radius);
    const double global =
        ProblemConstants(problem, 2 * s).lipschitz + mu * s;
    const Vector c = ProjectToBall(center, radius);
    const double local =
        (BaseGradient(problem, c) + z_mean + mu * c).norm() +
        (whole.smooth + mu) * (r + (center - c).norm());
    return beta * std::min(global, local);
  };
  return target;
}

Target ZeroTarget(int dim) {
  Target target;
  target.dim = dim;
  target.potential = [](const Vector&) { return 0.0; };
  target.local_lipschitz = [](const Vector&, double) { return 0.0; };
  return target;
}

Target QuadraticTarget(int dim, double scale, double radius) {
  Target target;
  target.dim = dim;
  target.radius = radius;
  target.potential = [scale](const Vector& x) {
    return 0.5 * scale * x.squaredNorm();
  };
  target.local_lipschitz = [scale, radius](const Vector& center, double r) {
    return scale * std::min(center.norm() + r, radius);
  };
  return target;
}

bool IsRejectionStall(const absl::Status& status) {
  return absl::IsResourceExhausted(status) &&
         absl::StartsWith(status.message(), kStallPrefix);
}

absl::StatusOr<Vector> RestrictedGaussianSample(const Target& target,
                                                const Vector& y, double eta,
                                                Rng& rng,
                                                const SamplerOptions& options,
                                                SamplerStats* stats) {
  if (!(eta > 0)) return absl::InvalidArgumentError("eta must be positive");
  if (y.size() != target.dim) {
    return absl::InvalidArgumentError("y has the wrong dimension");
  }
  const double sd = std::sqrt(eta);
  // Propose around the projection c of y. On a convex domain
  // |x - y|^2 = |x - c|^2 + |y - c|^2 + 2 <x - c, c - y> with a nonnegative
  // cross term, which becomes an extra acceptance factor.
  const Vector c = ProjectToBall(y, target.radius);
  const Vector outward = c - y;
  const double reach = 6 * std::sqrt(eta * target.dim);
  const double lower =
      target.potential(c) - target.local_lipschitz(c, reach) * reach;
  int64_t evals = 1;
  for (int64_t attempt = 1; attempt <= options.max_attempts; ++attempt) {
    Vector x = c + rng.GaussianVector(target.dim, sd);
    if (!target.Contains(x)) continue;
    const double cross = std::max(0.0, (x - c).dot(outward)) / eta;
    const double gap = target.potential(x) - lower + cross;
    ++evals;
    // A negative gap can only occur outside B(c, 6 sqrt(eta d)).
    if (gap <= 0 || rng.UniformOpen() < std::exp(-gap)) {
      if (stats != nullptr) {
        ++stats->calls;
        stats->attempts += attempt;
        stats->potential_evals += evals;
      }
      return x;
    }
  }
  if (stats != nullptr) {
    stats->attempts += options.max_attempts;
    stats->potential_evals += evals;
  }
  return absl::ResourceExhaustedError(absl::StrFormat(
      "%s: no acceptance in %d attempts (floor %g); eta = %g is too large "
      "for the potential",
      kStallPrefix, options.max_attempts, options.acceptance_floor, eta));
}

absl::StatusOr<Vector> AlternateSample(const Target& target, const Vector& x0,
                                       double eta, int64_t steps, Rng& rng,
                                       const SamplerOptions& options,
                                       SamplerStats* stats,
                                       std::vector<ChainStep>* history) {
  if (!target.Contains(x0)) {
    return absl::InvalidArgumentError("x0 lies outside the domain");
  }
  if (steps < 0) return absl::InvalidArgumentError("steps must be >= 0");
  Vector x = x0;
  const double sd = std::sqrt(eta);
  for (int64_t t = 1; t <= steps; ++t) {
    const Vector y = x + rng.GaussianVector(target.dim, sd);
    SamplerStats step_stats;
    absl::StatusOr<Vector> next =
        RestrictedGaussianSample(target, y, eta, rng, options, &step_stats);
    if (stats != nullptr) {
      stats->calls += step_stats.calls;
      stats->attempts += step_stats.attempts;
      stats->potential_evals += step_stats.potential_evals;
    }
    if (!next.ok()) return next.status();
    x = *std::move(next);
    if (history != nullptr) {
      history->push_back({t, step_stats.AcceptRate(), x});
    }
  }
  return x;
}

absl::StatusOr<Vector> InitialDraw(const Target& target, double beta_mu,
                                   Rng& rng) {
  if (!(beta_mu > 0)) return absl::InvalidArgumentError("beta mu must be > 0");
  const double sd = 1 / std::sqrt(beta_mu);
  for (int attempt = 0; attempt < 1000000; ++attempt) {
    Vector x = rng.GaussianVector(target.dim, sd);
    if (target.Contains(x)) return x;
  }
  return absl::ResourceExhaustedError(
      "initial law puts almost no mass on the domain");
}

std::string ChainDiagnosticsCsv(
    const std::vector<std::vector<ChainStep>>& chains, int dim) {
  std::string out = "chain_id,t,accept_rate";
  for (int i = 0; i < dim; ++i) absl::StrAppend(&out, ",x", i);
  out += "\n";
  for (size_t chain = 0; chain < chains.size(); ++chain) {
    for (const ChainStep& step : chains[chain]) {
      absl::StrAppendFormat(&out, "%d,%d,%.17g", chain, step.t,
                            step.accept_rate);
      for (Eigen::Index i = 0; i < step.x.size(); ++i) {
        absl::StrAppendFormat(&out, ",%.17g", step.x(i));
      }
      out += "\n";
    }
  }
  return out;
}

absl::StatusOr<EmRunResult> RunExponentialMechanism(
    const Problem& problem, const Dataset& dataset, const ObjectiveSpec& spec,
    const Budget& budget, const EmKnobs& knobs, Rng& rng, Ledger* ledger) {
  if (absl::Status s = spec.Validate(); !s.ok()) return s;
  absl::StatusOr<EMConfig> config =
      ChooseEmParams(budget.epsilon, budget.delta, spec.lipschitz,
                     spec.diameter, dataset.size(), spec.dim, knobs);
  if (!config.ok()) return config.status();
  // Certificate, re-evaluated from scratch before any data is touched.
  absl::StatusOr<double> c_lsi =
      StroockClsi(config->beta, config->mu, spec.lipschitz, spec.diameter);
  if (!c_lsi.ok()) return c_lsi.status();
  const double certified = LsiDpEpsilon(spec.lipschitz, config->beta,
                                        dataset.size(), *c_lsi, budget.delta);
  if (!(certified <= budget.epsilon)) {
    return absl::InternalError(absl::StrFormat(
        "privacy certificate failed: %.17g > %.17g", certified,
        budget.epsilon));
  }
  if (ledger != nullptr) {
    if (absl::Status s =
            ledger->Charge("em/continuous", budget.epsilon, budget.delta);
        !s.ok()) {
      return s;
    }
  }
  const Target target = MakeGibbsTarget(problem, dataset, config->beta,
                                        config->mu, spec.diameter);
  absl::StatusOr<Vector> x0 =
      InitialDraw(target, config->beta * config->mu, rng);
  if (!x0.ok()) return x0.status();
  EmRunResult result;
  result.config = *config;
  absl::StatusOr<Vector> x = AlternateSample(target, *x0, config->eta,
                                             config->steps, rng, {},
                                             &result.stats);
  if (!x.ok()) return x.status();
  result.point = *std::move(x);
  return result;
}

absl::StatusOr<EmRiskReport> EmExcessRiskReport(
    const std::vector<Vector>& samples, const Problem& problem,
    const Dataset& dataset, double mu, double diameter) {
  if (samples.empty()) return absl::InvalidArgumentError("no samples");
  if (dataset.size() == 0) return absl::InvalidArgumentError("empty dataset");
  const Vector z_mean = dataset.samples.rowwise().mean();
  auto empirical = [&](const Vector& x) {
    return BaseValue(problem, x) + z_mean.dot(x);
  };
  auto population = [&](const Vector& x) { return BaseValue(problem, x); };
  auto regularized = [&](const Vector& x) {
    return empirical(x) + 0.5 * mu * x.squaredNorm();
  };

  EmRiskReport report;
  report.count = static_cast<int64_t>(samples.size());
  const double count = static_cast<double>(samples.size());
  double emp_sum = 0, emp_sq = 0, pop_sum = 0, pop_sq = 0, reg_sum = 0;
  for (const Vector& x : samples) {
    const double e = empirical(x), p = population(x);
    emp_sum += e;
    emp_sq += e * e;
    pop_sum += p;
    pop_sq += p * p;
    reg_sum += regularized(x);
  }
  report.mean_empirical_risk = emp_sum / count;
  report.mean_population_risk = pop_sum / count;
  auto stderr_of = [count](double sum, double sq) {
    if (count < 2) return 0.0;
    const double mean = sum / count;
    const double var = std::max(0.0, (sq - count * mean * mean) / (count - 1));
    return std::sqrt(var / count);
  };
  report.empirical_stderr = stderr_of(emp_sum, emp_sq);
  report.population_stderr = stderr_of(pop_sum, pop_sq);
  if (problem.dim > 2) return report;

  const double radius = diameter / 2;
  absl::StatusOr<GridMinimum> emp_min =
      MinimizeOnBall(empirical, problem.dim, radius);
  absl::StatusOr<GridMinimum> pop_min =
      MinimizeOnBall(population, problem.dim, radius);
  absl::StatusOr<GridMinimum> reg_min =
      MinimizeOnBall(regularized, problem.dim, radius);
  if (!emp_min.ok()) return emp_min.status();
  if (!pop_min.ok()) return pop_min.status();
  if (!reg_min.ok()) return reg_min.status();
  report.empirical_excess = report.mean_empirical_risk - emp_min->value;
  report.population_excess = report.mean_population_risk - pop_min->value;
  report.regularized_excess = reg_sum / count - reg_min->value;
  return report;
}

}  // namespace dpnc
