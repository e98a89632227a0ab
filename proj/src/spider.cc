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

#include "dpnc/spider.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace dpnc {
namespace {

constexpr char kFirstLabel[] = "spider/o1";
constexpr char kSecondLabel[] = "spider/o2";

// PolyLog that also notes when the argument was clamped.
double CheckedLog(double argument, bool polylog, const char* what,
                  std::vector<std::string>& warnings) {
  if (polylog && !(argument >= M_E)) {
    warnings.push_back(absl::StrFormat(
        "log argument %s = %g below e; clamped so the factor is 1", what,
        argument));
  }
  return PolyLog(argument, polylog);
}

int64_t CeilToCount(double value) {
  return static_cast<int64_t>(std::ceil(value));
}

}  // namespace

nlohmann::json SpiderKnobs::ToJson() const {
  nlohmann::json j = {{"c_gamma", c_gamma},
                      {"c_freeze", c_freeze},
                      {"c_iterations", c_iterations},
                      {"c_threshold", c_threshold},
                      {"threshold_exponent", threshold_exponent},
                      {"c_drift_count", c_drift_count},
                      {"c_zeta", c_zeta},
                      {"batch_scale", batch_scale},
                      {"polylog", polylog},
                      {"divergence_factor", divergence_factor}};
  if (iterations_override) j["iterations_override"] = *iterations_override;
  if (freeze_override) j["freeze_override"] = *freeze_override;
  return j;
}

nlohmann::json SpiderConfig::ToJson() const {
  return {{"gamma", gamma},         {"freeze", freeze},
          {"eta", eta},             {"iterations", iterations},
          {"kappa", kappa},         {"omega", omega},
          {"threshold", threshold}, {"alpha", alpha},
          {"zeta1", zeta1},         {"zeta2", zeta2},
          {"diameter", diameter},   {"knobs", knobs.ToJson()},
          {"warnings", warnings}};
}

double PolyLog(double argument, bool polylog) {
  if (!polylog) return 1.0;
  return argument >= M_E ? std::log(argument) : 1.0;
}

absl::StatusOr<SpiderConfig> DeriveConfig(const ObjectiveSpec& spec,
                                          double zeta1, double zeta2,
                                          double kappa, double omega,
                                          const SpiderKnobs& knobs,
                                          bool noiseless) {
  if (absl::Status s = spec.Validate(); !s.ok()) return s;
  if (!(kappa > 0)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("kappa must be positive, got %g", kappa));
  }
  if (!(omega > 0 && omega < 1)) {
    return absl::InvalidArgumentError(
        absl::StrFormat("omega must lie in (0, 1), got %g", omega));
  }
  const double m = spec.smooth, rho = spec.hessian_lipschitz;
  const double b = spec.value_range, d = spec.dim;

  SpiderConfig config;
  config.kappa = kappa;
  config.omega = omega;
  config.eta = 1 / m;
  config.zeta1 = zeta1;
  config.zeta2 = zeta2;
  config.diameter = spec.diameter;
  config.knobs = knobs;

  const double noise = zeta2 * zeta2 * kappa + 4 * zeta1 * zeta1;
  if (noise == 0 && !noiseless) {
    return absl::InvalidArgumentError(
        "gamma is zero: both oracles are noiseless; pass the noiseless flag "
        "and an explicit iteration count");
  }
  const double log_outer = CheckedLog(b * m * d / (rho * omega), knobs.polylog,
                                      "BMd/(rho omega)", config.warnings);
  config.gamma = std::sqrt(4 * knobs.c_gamma * noise * log_outer);
  config.threshold = knobs.c_threshold * config.gamma *
                     std::pow(log_outer, knobs.threshold_exponent);
  config.alpha = config.threshold;

  if (config.gamma > 0) {
    const double log_inner =
        CheckedLog(d * m * b / (rho * config.gamma * omega), knobs.polylog,
                   "dMB/(rho gamma omega)", config.warnings);
    const double freeze = knobs.c_freeze * m * log_inner /
                          std::sqrt(rho * config.gamma);
    const double iterations = knobs.c_iterations * b * m *
                              std::pow(log_inner, 4) /
                              (config.gamma * config.gamma);
    if (!(iterations <= static_cast<double>(knobs.max_iterations)) &&
        !knobs.iterations_override) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "derived iteration count %g exceeds the limit %d", iterations,
          knobs.max_iterations));
    }
    config.freeze = std::max<int64_t>(1, CeilToCount(freeze));
    config.iterations = CeilToCount(iterations);
  } else {
    if (!knobs.iterations_override) {
      return absl::InvalidArgumentError(
          "noiseless configuration needs an explicit iteration count");
    }
    config.freeze = 1;
  }
  if (knobs.iterations_override) config.iterations = *knobs.iterations_override;
  if (knobs.freeze_override) config.freeze = *knobs.freeze_override;
  if (config.iterations < 0 || config.freeze < 0) {
    return absl::InvalidArgumentError("iteration and freeze counts must be >= 0");
  }
  return config;
}

const char* BranchName(Branch branch) {
  switch (branch) {
    case Branch::kReanchor:
      return "reanchor";
    case Branch::kLargeDrift:
      return "large_drift_o1";
    case Branch::kSecondOrder:
      return "o2";
  }
  return "unknown";
}

const char* TerminationName(Termination termination) {
  switch (termination) {
    case Termination::kCompleted:
      return "completed";
    case Termination::kDataExhausted:
      return "data_exhausted";
    case Termination::kDiverged:
      return "diverged";
  }
  return "unknown";
}

SpiderState InitialState(const Vector& x0, const SpiderConfig& config) {
  SpiderState state;
  state.t = 0;
  state.x = x0;
  state.x_prev = x0;
  state.grad_prev = Vector::Zero(x0.size());
  state.drift = config.kappa;
  state.frozen = 0;
  return state;
}

absl::StatusOr<StepRecord> SpiderStep(SpiderState& state,
                                      GradientOracle& oracle,
                                      const SpiderConfig& config, Rng& rng) {
  StepRecord record;
  record.t = state.t;
  record.drift_entry = state.drift;

  Vector grad;
  double drift = state.drift;
  int64_t frozen = state.frozen;
  if (state.grad_prev.norm() <= config.threshold && state.frozen <= 0) {
    record.branch = Branch::kReanchor;
    absl::StatusOr<Vector> first = oracle.First(state.x);
    if (!first.ok()) return first.status();
    const int d = static_cast<int>(state.x.size());
    grad = *std::move(first) +
           rng.GaussianVector(d, config.zeta1 / std::sqrt(static_cast<double>(d)));
    frozen = config.freeze;
    drift = 0;
  } else if (state.drift >= config.kappa) {
    record.branch = Branch::kLargeDrift;
    absl::StatusOr<Vector> first = oracle.First(state.x);
    if (!first.ok()) return first.status();
    grad = *std::move(first);
    drift = 0;
    frozen = state.frozen - 1;
  } else {
    record.branch = Branch::kSecondOrder;
    absl::StatusOr<Vector> delta = oracle.Second(state.x, state.x_prev);
    if (!delta.ok()) return delta.status();
    grad = state.grad_prev + *delta;
    frozen = state.frozen - 1;
  }

  // Drift accumulates on top of the post-branch value, so a reset really
  // restarts the count.
  const double grad_sq = grad.squaredNorm();
  drift += config.eta * config.eta * grad_sq;

  state.x_prev = state.x;
  state.x = state.x - config.eta * grad;
  state.grad_prev = std::move(grad);
  state.drift = drift;
  state.frozen = frozen;
  ++state.t;

  record.grad_est_norm = std::sqrt(grad_sq);
  record.drift = drift;
  record.frozen = frozen;
  record.eps_spent = oracle.charged_epsilon();
  return record;
}

absl::StatusOr<Trace> SpiderRun(const Vector& x0, GradientOracle& oracle,
                                const SpiderConfig& config, Rng& rng,
                                const GradientProbe& probe) {
  Trace trace;
  trace.points.reserve(static_cast<size_t>(config.iterations) + 1);
  trace.points.push_back(x0);
  SpiderState state = InitialState(x0, config);
  const double divergence_radius =
      config.knobs.divergence_factor * config.diameter;

  for (int64_t step = 0; step < config.iterations; ++step) {
    const Vector x_t = state.x;
    absl::StatusOr<StepRecord> record = SpiderStep(state, oracle, config, rng);
    if (!record.ok()) {
      if (IsDataExhausted(record.status())) {
        trace.termination = Termination::kDataExhausted;
        break;
      }
      return record.status();
    }
    if (probe) {
      const Vector exact = probe(x_t);
      record->true_grad_norm = exact.norm();
      record->estimate_error = (state.grad_prev - exact).norm();
    }
    if (record->branch == Branch::kLargeDrift) ++trace.large_drift_count;
    if (record->branch == Branch::kReanchor) ++trace.reanchor_count;
    trace.steps.push_back(*std::move(record));
    trace.points.push_back(state.x);
    if (!state.x.allFinite() ||
        (divergence_radius > 0 && state.x.norm() > divergence_radius)) {
      trace.termination = Termination::kDiverged;
      break;
    }
  }
  return trace;
}

absl::StatusOr<TheoremParameters> TheoremParams(const ObjectiveSpec& spec,
                                                const Budget& budget,
                                                OracleMode mode, int64_t n,
                                                double omega,
                                                const SpiderKnobs& knobs) {
  if (absl::Status s = spec.Validate(); !s.ok()) return s;
  if (n < 2) return absl::InvalidArgumentError("need at least two samples");
  if (!(budget.epsilon > 0) || !(budget.delta > 0 && budget.delta < 1)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "theorem parameters need epsilon > 0 and delta in (0, 1), got "
        "(%g, %g)",
        budget.epsilon, budget.delta));
  }
  const double g = spec.lipschitz, m = spec.smooth, rho = spec.hessian_lipschitz;
  const double b = spec.value_range, d = spec.dim;
  const double eta = 1 / m;
  const double eps = budget.epsilon;
  const double nd = static_cast<double>(n);

  TheoremParameters out;
  std::vector<std::string>& warnings = out.warnings;
  const bool polylog = knobs.polylog;
  const double log_delta =
      CheckedLog(1 / budget.delta, polylog, "1/delta", warnings);
  const double log_alpha =
      CheckedLog(nd * b * m * d / (rho * omega), polylog, "nBMd/(rho omega)",
                 warnings);

  auto derive = [&](const OracleParams& params)
      -> absl::StatusOr<SpiderConfig> {
    auto [zeta1, zeta2] = InducedZetas(params, spec, mode, knobs.c_zeta);
    return DeriveConfig(spec, zeta1, zeta2, out.kappa, omega, knobs);
  };

  if (mode == OracleMode::kEmpirical) {
    const double log_n =
        CheckedLog(nd * d * m * b / omega, polylog, "ndMB/omega", warnings);
    const double privacy_rate = std::sqrt(d * log_delta) / (nd * eps);
    out.kappa = std::pow(g, 4.0 / 3) * std::cbrt(b) / std::pow(m, 5.0 / 3) *
                std::pow(privacy_rate, 2.0 / 3);
    out.oracle.sigma1 = g * std::sqrt(b * eta * log_delta * log_delta / out.kappa) *
                        log_n * log_n / (nd * eps);
    out.expected_alpha =
        std::pow(std::sqrt(d * b * g * m * log_delta * log_delta) / (nd * eps),
                 2.0 / 3) *
        std::pow(log_alpha, 6);
    auto sigma2_for = [&](double alpha) {
      return m * std::sqrt(log_delta * log_delta * b * m / (alpha * alpha)) *
             std::pow(log_n, 5) / (nd * eps);
    };
    out.oracle.sigma2 = sigma2_for(out.expected_alpha);
    absl::StatusOr<SpiderConfig> first_pass = derive(out.oracle);
    if (!first_pass.ok()) return first_pass.status();
    out.oracle.sigma2 = sigma2_for(first_pass->alpha);
    out.first_split = n;
    out.second_split = n;
  } else {
    const double log_d = CheckedLog(d, polylog, "d", warnings);
    const double privacy_rate = std::sqrt(d * log_delta) / (nd * eps);
    const double statistical = std::pow(g, 4.0 / 3) * std::cbrt(b * log_d) /
                               std::pow(m, 5.0 / 3) / std::cbrt(nd);
    const double private_term =
        std::pow(g * std::pow(b, 2.0 / 3) / std::pow(m, 5.0 / 3), 6.0 / 7) *
        std::pow(privacy_rate, 4.0 / 7);
    out.kappa = std::max(statistical, private_term);
    out.expected_alpha =
        (std::cbrt(b * g * m * log_d) / std::cbrt(nd) +
         std::pow(g, 1.0 / 7) * std::pow(b * m, 3.0 / 7) *
             std::pow(privacy_rate, 3.0 / 7)) *
        std::pow(log_alpha, 3);
    auto batch = [&](double raw, const char* name) {
      const double scaled = knobs.batch_scale * raw;
      if (scaled < 1) {
        warnings.push_back(absl::StrFormat(
            "%s = %g below one sample; rounded up to 1", name, scaled));
      }
      return std::max<int64_t>(1, CeilToCount(scaled));
    };
    out.oracle.b1 = batch(nd * out.kappa / (b * eta), "b1");
    out.oracle.b2 = batch(nd * out.expected_alpha * out.expected_alpha / (b * m),
                          "b2");
    out.oracle.sigma1 = g * std::sqrt(log_delta) /
                        (static_cast<double>(out.oracle.b1) * eps);
    out.oracle.sigma2 = m * std::sqrt(log_delta) /
                        (static_cast<double>(out.oracle.b2) * eps);
    out.first_split = (n + 1) / 2;
    out.second_split = n / 2;
  }

  absl::StatusOr<SpiderConfig> config = derive(out.oracle);
  if (!config.ok()) return config.status();
  out.config = *std::move(config);
  std::tie(out.oracle.zeta1, out.oracle.zeta2) =
      InducedZetas(out.oracle, spec, mode, knobs.c_zeta);

  const double gamma = out.config.gamma;
  const double iterations = static_cast<double>(out.config.iterations);
  out.drift_count_bound = CeilToCount(
      knobs.c_drift_count * (b * eta / out.kappa +
                             iterations * gamma * gamma * eta * eta / out.kappa));

  if (mode == OracleMode::kPopulation) {
    const int64_t anchors = out.config.iterations / out.config.freeze + 1;
    const double needed =
        static_cast<double>(out.oracle.b1) *
            static_cast<double>(out.drift_count_bound + anchors) +
        static_cast<double>(out.oracle.b2) * iterations;
    if (needed > static_cast<double>(out.first_split)) {
      return absl::FailedPreconditionError(absl::StrFormat(
          "sample budget infeasible: b1 (|K| + anchors) + b2 T = %.0f exceeds "
          "the %d samples of the first half (b1=%d, b2=%d, |K|<=%d, T=%d)",
          needed, out.first_split, out.oracle.b1, out.oracle.b2,
          out.drift_count_bound, out.config.iterations));
    }
  }
  for (const std::string& w : out.config.warnings) out.warnings.push_back(w);
  return out;
}

absl::StatusOr<SpiderOutcome> RunPrivateSpider(
    const Problem& problem, const Dataset& dataset, const ObjectiveSpec& spec,
    const Budget& budget, OracleMode mode, double omega,
    const SpiderKnobs& knobs, const Vector& x0, Rng& rng, Ledger& ledger,
    std::vector<int> sample_pool, const GradientProbe& probe) {
  SpiderOutcome outcome;
  absl::StatusOr<TheoremParameters> params =
      TheoremParams(spec, budget, mode, dataset.size(), omega, knobs);
  if (!params.ok()) return params.status();
  outcome.params = *std::move(params);
  const TheoremParameters& p = outcome.params;
  const Budget half{budget.epsilon / 2, budget.delta / 2};

  if (mode == OracleMode::kEmpirical) {
    const int64_t anchors = p.config.iterations / p.config.freeze + 2;
    absl::StatusOr<Budget> first = ledger.Reserve(
        kFirstLabel, half, p.drift_count_bound + anchors, Composition::kAdvanced);
    if (!first.ok()) return first.status();
    absl::StatusOr<Budget> second = ledger.Reserve(
        kSecondLabel, half, p.config.iterations + 1, Composition::kAdvanced);
    if (!second.ok()) return second.status();
  } else {
    if (sample_pool.empty()) {
      sample_pool.resize(static_cast<size_t>(p.first_split));
      std::iota(sample_pool.begin(), sample_pool.end(), 0);
    }
    const int64_t batches = static_cast<int64_t>(sample_pool.size());
    absl::StatusOr<Budget> first =
        ledger.Reserve(kFirstLabel, half, batches, Composition::kParallel);
    if (!first.ok()) return first.status();
    absl::StatusOr<Budget> second =
        ledger.Reserve(kSecondLabel, half, batches, Composition::kParallel);
    if (!second.ok()) return second.status();
  }

  SampleCursor cursor(std::move(sample_pool), rng);
  GradientOracle oracle(problem, dataset, mode, p.oracle, rng,
                        mode == OracleMode::kPopulation ? &cursor : nullptr);
  oracle.SetCharging(&ledger, kFirstLabel, kSecondLabel);
  absl::StatusOr<Trace> trace = SpiderRun(x0, oracle, p.config, rng, probe);
  if (!trace.ok()) return trace.status();
  outcome.trace = *std::move(trace);
  outcome.first_calls = oracle.first_calls();
  outcome.second_calls = oracle.second_calls();
  if (mode == OracleMode::kPopulation) {
    std::span<const int> used = cursor.ConsumedIndices();
    outcome.consumed.assign(used.begin(), used.end());
  }
  return outcome;
}

std::string TraceToCsv(const Trace& trace, const SpiderConfig& config) {
  std::string out = absl::StrCat("# ", config.ToJson().dump(), "\n");
  out += "t,branch,grad_est_norm,drift,frozen,true_grad_norm,eps_spent\n";
  for (const StepRecord& r : trace.steps) {
    absl::StrAppendFormat(&out, "%d,%s,%.17g,%.17g,%d,", r.t,
                          BranchName(r.branch), r.grad_est_norm, r.drift,
                          r.frozen);
    if (r.true_grad_norm) absl::StrAppendFormat(&out, "%.17g", *r.true_grad_norm);
    absl::StrAppendFormat(&out, ",%.17g\n", r.eps_spent);
  }
  return out;
}

}  // namespace dpnc
