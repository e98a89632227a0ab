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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "absl/strings/str_format.h"
#include "dpnc/expmech.h"
#include "dpnc/harness.h"
#include "dpnc/objective.h"
#include "dpnc/packing.h"
#include "dpnc/privacy.h"
#include "dpnc/random.h"
#include "dpnc/select.h"
#include "dpnc/spider.h"
#include "test_oracles.h"

namespace dpnc {
namespace {

using ::dpnc::testing::BinMasses;
using ::dpnc::testing::HistogramTv;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double RelErr(double got, double want) {
  if (want == 0) return std::abs(got);
  return std::abs(got - want) / std::abs(want);
}

// Tolerances.
constexpr double kExactRel = 1e-12;
constexpr double kCertRel = 1e-9;
constexpr double kSamplerTv = 0.05;
constexpr double kDiscreteTv = 0.02;
constexpr double kTvNoise = 0.02;

Outcome Accountant() {
  // Hand-evaluated eps / (2 sqrt(2 k ln(2 / delta))) at eps = 0.5,
  // delta = 1e-6.
  struct Case {
    int64_t k;
    double eps, delta;
  };
  const Case cases[] = {{1, 0.04640998125038604, 5e-7},
                        {4, 0.02320499062519302, 1.25e-7},
                        {16, 0.01160249531259651, 3.125e-8}};
  double worst = 0;
  bool ok = true;
  for (const Case& c : cases) {
    absl::StatusOr<Budget> b = ComposeAdvanced({0.5, 1e-6}, c.k);
    if (!b.ok()) return {false, std::string(b.status().message())};
    worst = std::max({worst, RelErr(b->epsilon, c.eps),
                      RelErr(b->delta, c.delta)});
  }
  ok &= worst <= kExactRel;
  ok &= !ComposeAdvanced({0.95, 1e-6}, 2).ok();
  const double ln2 = std::numbers::ln2;
  const double quantiles[][3] = {{0.5, 3, 0}, {0.75, 1, ln2}, {0.25, 2, -2 * ln2}};
  for (const auto& q : quantiles) {
    absl::StatusOr<double> x = LaplaceInverseCdf(q[0], q[1]);
    ok &= x.ok() && RelErr(*x, q[2]) <= kExactRel;
  }
  return {ok, absl::StrFormat("worst compose rel err %.3g", worst)};
}

struct SpiderSample {
  int o2_steps = 0;
  int drift_violations = 0;
  int over_count_runs = 0;
  int tracking_ok = 0;
  double worst_ratio = 0;  // max_t error / (gamma / 4)
  int runs = 0;
};

Vector ExactGradient(const Problem& p, const Dataset& d, const Vector& x) {
  return BaseGradient(p, x) + d.samples.rowwise().mean();
}

SpiderSample SpiderInvariantRuns() {
  SpiderSample s;
  SpiderKnobs knobs;
  knobs.polylog = false;
  for (uint64_t run = 0; run < 100; ++run) {
    const Problem problem =
        *MakeProblem(ProblemKind::kCubicSaddle, 2, 0.1, DeriveSeed(21, run));
    const Dataset data = *MakeDataset(problem, 4096, DeriveSeed(22, run));
    const ObjectiveSpec spec = ProblemConstants(problem, 4.0);
    Ledger ledger({0.5, 1e-6});
    Rng rng(DeriveSeed(23, run));
    absl::StatusOr<SpiderOutcome> out = RunPrivateSpider(
        problem, data, spec, {0.5, 1e-6}, OracleMode::kEmpirical, 0.05, knobs,
        Vector::Zero(2), rng, ledger, {},
        [&](const Vector& x) { return ExactGradient(problem, data, x); });
    if (!out.ok()) {
      ++s.over_count_runs;
      continue;
    }
    ++s.runs;
    const double kappa = out->params.config.kappa;
    int64_t large_drift = 0;
    double worst = 0;
    for (const StepRecord& step : out->trace.steps) {
      if (step.branch == Branch::kSecondOrder) {
        ++s.o2_steps;
        s.drift_violations += !(step.drift_entry < kappa);
      }
      large_drift += step.branch == Branch::kLargeDrift;
      if (step.estimate_error) worst = std::max(worst, *step.estimate_error);
    }
    s.over_count_runs += large_drift > out->params.drift_count_bound;
    const double ratio = worst / (out->params.config.gamma / 4);
    s.worst_ratio = std::max(s.worst_ratio, ratio);
    s.tracking_ok += ratio <= 1;
  }
  return s;
}

Outcome SaddleEscape() {
  SpiderKnobs knobs;
  knobs.polylog = false;
  Vector target(2);
  target << 1, 0;
  int certified = 0, right = 0;
  for (uint64_t run = 0; run < 50; ++run) {
    const Problem problem =
        *MakeProblem(ProblemKind::kCubicSaddle, 2, 0, DeriveSeed(31, run));
    const Dataset data = *MakeDataset(problem, 4096, DeriveSeed(32, run));
    const ObjectiveSpec spec = ProblemConstants(problem, 4.0);
    Ledger ledger({0.5, 1e-6});
    Rng rng(DeriveSeed(33, run));
    Vector x0(2);
    x0 << -1, 0;
    absl::StatusOr<SpiderOutcome> out =
        RunPrivateSpider(problem, data, spec, {0.5, 1e-6},
                         OracleMode::kEmpirical, 0.05, knobs, x0, rng, ledger);
    if (!out.ok()) continue;
    const double alpha = out->params.config.alpha;
    bool hit = false;
    for (const Vector& x : out->trace.points) {
      if ((x - target).norm() > 0.5) continue;
      absl::StatusOr<double> smin =
          SmallestEigenvalue(BaseHessian(problem, x));
      if (!smin.ok()) continue;
      if (CertifySosp(ExactGradient(problem, data, x), *smin, alpha,
                      spec.hessian_lipschitz)
              .is_sosp) {
        hit = true;
        break;
      }
    }
    certified += hit;
    right += out->trace.points.back()(0) > 0;
  }
  return {certified >= 45,
          absl::StrFormat("%d/50 certified near (1,0); %d/50 end with x1 > 0",
                          certified, right)};
}

Outcome AboveThresholdCriterion() {
  constexpr int64_t kN = 10000;
  constexpr int kCandidates = 20;
  constexpr double kEps = 1.0, kOmega = 0.05, kAlpha = 0.05;
  int returned = 0, sound = 0;
  for (uint64_t run = 0; run < 200; ++run) {
    const Problem problem =
        *MakeProblem(ProblemKind::kCubicSaddle, 2, 0.1, DeriveSeed(41, run));
    const Dataset data = *MakeDataset(problem, kN, DeriveSeed(42, run));
    const ObjectiveSpec spec = ProblemConstants(problem, 4.0);
    const Vector z = data.samples.rowwise().mean();
    Rng rng(DeriveSeed(43, run));
    std::vector<Vector> points;
    for (int i = 0; i < kCandidates; ++i) {
      Vector u = rng.GaussianVector(2, 1.0);
      points.push_back(u.normalized() * 2 * std::sqrt(rng.UniformOpen()));
    }
    // The exact minimizer of F_D: x1^2 - 1 + z1 = 0 on the right branch.
    Vector minimizer(2);
    minimizer << std::sqrt(1 - z(0)), -z(1);
    points[rng.engine()() % kCandidates] = minimizer;
    absl::StatusOr<SelectionResult> r = AboveThreshold(
        points, problem, data, spec, kAlpha, kEps, kOmega, rng);
    if (!r.ok() || !r->point) continue;
    ++returned;
    const Vector& x = *r->point;
    const double log_term = std::log(2.0 * kCandidates / kOmega);
    const double grad = ExactGradient(problem, data, x).norm();
    const double smin = *SmallestEigenvalue(BaseHessian(problem, x));
    sound += grad <= kAlpha + 32 * log_term * spec.lipschitz / (kN * kEps) &&
             smin >= -std::sqrt(spec.hessian_lipschitz * kAlpha) -
                         32 * log_term * spec.smooth / (kN * kEps);
  }
  return {returned >= 190 && sound * 100 >= 95 * returned,
          absl::StrFormat("%d/200 returned, %d sound", returned, sound)};
}

Outcome RateScan() {
  ExperimentConfig c;
  c.experiment = ExperimentKind::kRateScan;
  c.problem = ProblemKind::kCubicSaddle;
  c.dim = 2;
  c.epsilon = 1.0;
  c.trials = 20;
  c.seed = 7;
  c.knobs.polylog = false;
  c.n_list = {1024, 2048, 4096, 8192, 16384};
  absl::StatusOr<ResultsTable> t = RunExperiment(c);
  if (!t.ok() || !t->fit_slope) return {false, "rate scan did not run"};
  const double slope = *t->fit_slope;
  return {slope >= -1.0 && slope <= -0.4, absl::StrFormat("slope %.4f", slope)};
}

Outcome RestrictedGaussian() {
  constexpr int kDraws = 100000;
  // Quadratic on [-1.5, 1.5].
  constexpr double kR = 1.5, kScale = 2.0, kEtaQ = 0.02, kYQ = 0.7;
  const Target quad = QuadraticTarget(1, kScale, kR);
  Rng rng(71);
  Vector y(1);
  y << kYQ;
  std::vector<double> draws;
  for (int i = 0; i < kDraws; ++i) {
    absl::StatusOr<Vector> x = RestrictedGaussianSample(quad, y, kEtaQ, rng);
    if (!x.ok()) return {false, std::string(x.status().message())};
    draws.push_back((*x)(0));
  }
  const double tv_quad = HistogramTv(
      draws,
      BinMasses(
          [&](double x) {
            return std::exp(-0.5 * kScale * x * x -
                            (x - kYQ) * (x - kYQ) / (2 * kEtaQ));
          },
          -kR, kR, 60),
      -kR, kR);

  // Gibbs target of the 1-d double well.
  constexpr double kBeta = 2.0, kMu = 0.1, kD = 3.0, kEtaW = 0.02, kYW = 0.3;
  const Problem well = *MakeProblem(ProblemKind::kDoubleWell, 1, 0.1, 72);
  const Dataset data = *MakeDataset(well, 50, 73);
  const double zbar = data.samples.rowwise().mean()(0);
  const Target gibbs = MakeGibbsTarget(well, data, kBeta, kMu, kD);
  y << kYW;
  draws.clear();
  for (int i = 0; i < kDraws; ++i) {
    absl::StatusOr<Vector> x = RestrictedGaussianSample(gibbs, y, kEtaW, rng);
    if (!x.ok()) return {false, std::string(x.status().message())};
    draws.push_back((*x)(0));
  }
  const double h = kD / 2;
  const double tv_well = HistogramTv(
      draws,
      BinMasses(
          [&](double x) {
            const double f = 0.25 * (x * x - 1) * (x * x - 1) + zbar * x;
            return std::exp(-kBeta * (f + 0.5 * kMu * x * x) -
                            (x - kYW) * (x - kYW) / (2 * kEtaW));
          },
          -h, h, 60),
      -h, h);
  return {tv_quad <= kSamplerTv && tv_well <= kSamplerTv,
          absl::StrFormat("TV quadratic %.4f, double_well %.4f", tv_quad,
                          tv_well)};
}

Outcome AlternateSampleCriterion() {
  constexpr int kChains = 10000;
  constexpr double kEta = 0.05;
  const int checkpoints[] = {1, 4, 16, 64};
  const Target target = QuadraticTarget(1, 1.0);
  std::vector<std::vector<double>> at(4);
  for (int c = 0; c < kChains; ++c) {
    Rng rng(DeriveSeed(81, c));
    std::vector<ChainStep> history;
    absl::StatusOr<Vector> x = AlternateSample(target, Vector::Zero(1), kEta,
                                               64, rng, {}, nullptr, &history);
    if (!x.ok()) return {false, std::string(x.status().message())};
    for (int k = 0; k < 4; ++k) {
      at[k].push_back(history[checkpoints[k] - 1].x(0));
    }
  }
  double sum = 0, sq = 0;
  for (double v : at[3]) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / kChains;
  const double var = sq / kChains - mean * mean;
  const std::vector<double> mass = BinMasses(
      [](double x) { return std::exp(-0.5 * x * x); }, -5, 5, 40);
  double tv[4];
  bool monotone = true;
  for (int k = 0; k < 4; ++k) {
    tv[k] = HistogramTv(at[k], mass, -5, 5);
    if (k > 0) monotone &= tv[k] <= tv[k - 1] + kTvNoise;
  }
  return {std::abs(mean) <= 0.03 && std::abs(var - 1) <= 0.05 && monotone,
          absl::StrFormat("mean %.4f var %.4f TV %.3f %.3f %.3f %.3f", mean,
                          var, tv[0], tv[1], tv[2], tv[3])};
}

Outcome LsiCertificate() {
  EmKnobs knobs;
  knobs.steps_override = 1;
  int checked = 0, feasible = 0, violations = 0;
  for (double eps : {0.05, 0.1, 0.2, 0.3, 0.45}) {
    for (double delta : {1e-5, 1e-8}) {
      for (int64_t n : {100, 1000, 10000, 100000, 1000000}) {
        for (int dim : {1, 10}) {
          ++checked;
          absl::StatusOr<EMConfig> c =
              ChooseEmParams(eps, delta, 1, 1, n, dim, knobs);
          if (!c.ok()) {
            violations += c.status().code() !=
                          absl::StatusCode::kFailedPrecondition;
            continue;
          }
          ++feasible;
          violations += !(LsiDpEpsilon(1, c->beta, n, c->c_lsi, delta) <= eps);
        }
      }
    }
  }
  const double clsi_want = std::exp(10.0) / 10;
  const double eps_want =
      2 * (10.0 / 1000) * std::sqrt(clsi_want) *
      std::sqrt(1 + 2 * std::log(1e6));
  absl::StatusOr<double> clsi = StroockClsi(10, 1, 1, 1);
  const double eps = LsiDpEpsilon(1, 10, 1000, clsi_want, 1e-6);
  const bool values = clsi.ok() && RelErr(*clsi, clsi_want) <= kCertRel &&
                      RelErr(eps, eps_want) <= kCertRel &&
                      std::abs(eps - 5.02) < 0.005;
  return {checked == 100 && violations == 0 && values,
          absl::StrFormat("%d grid points, %d feasible, %d violations; "
                          "example eps %.6f",
                          checked, feasible, violations, eps)};
}

Outcome DiscreteEm() {
  // F_D = x^2 / 2 on zero data; eps n / (2 G D) = 2.5 puts the centers at
  // weights 1, e^-1, e^-2.
  const Problem quad = *MakeProblem(ProblemKind::kQuadratic, 1, 0, 1);
  Dataset zero;
  zero.samples = Matrix::Zero(1, 10);
  Packing three;
  three.dim = 1;
  three.diameter = 2;
  three.centers = {Vector::Constant(1, 0), Vector::Constant(1, std::sqrt(0.8)),
                   Vector::Constant(1, std::sqrt(1.6))};
  Rng rng(91);
  double counts[3] = {0, 0, 0};
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) {
    absl::StatusOr<DiscreteSelection> s =
        DiscreteEmSelect(three, quad, zero, 1.0, 1.0, 2.0, rng);
    if (!s.ok()) return {false, std::string(s.status().message())};
    for (int j = 0; j < 3; ++j) counts[j] += s->point(0) == three.centers[j](0);
  }
  const double z = 1 + std::exp(-1) + std::exp(-2);
  double tv = 0;
  for (int j = 0; j < 3; ++j) {
    tv += std::abs(counts[j] / kDraws - std::exp(-j) / z);
  }
  tv /= 2;

  // Neighboring datasets, exact enumeration over the net.
  const Problem well = *MakeProblem(ProblemKind::kDoubleWell, 2, 0.3, 92);
  const ObjectiveSpec spec = ProblemConstants(well, 2.0);
  absl::StatusOr<Packing> net = BuildPacking(2, 2.0, 0.1);
  constexpr double kEps = 0.7;
  double worst = 0;
  if (!net.ok() || net->centers.size() > 1000) return {false, "bad packing"};
  const Dataset a = *MakeDataset(well, 50, 93);
  for (int swap = 0; swap < 5; ++swap) {
    Dataset b = a;
    Vector replacement = rng.GaussianVector(2, 1.0);
    b.samples.col(swap * 7) = replacement.normalized() * 0.3;
    absl::StatusOr<DiscreteSelection> sa =
        DiscreteEmSelect(*net, well, a, kEps, spec.lipschitz, 2.0, rng);
    absl::StatusOr<DiscreteSelection> sb =
        DiscreteEmSelect(*net, well, b, kEps, spec.lipschitz, 2.0, rng);
    if (!sa.ok() || !sb.ok()) return {false, "selection failed"};
    for (size_t i = 0; i < net->centers.size(); ++i) {
      worst = std::max(worst, std::abs(std::log(sa->probabilities[i] /
                                                sb->probabilities[i])));
    }
  }

  // Covering at d <= 3, probed with uniform points of the ball.
  bool covered = true;
  for (int dim = 1; dim <= 3; ++dim) {
    constexpr double kRadius = 0.25;
    absl::StatusOr<Packing> p = BuildPacking(dim, 2.0, kRadius);
    if (!p.ok()) return {false, "packing failed"};
    covered &= p->covering_radius_cert <= kRadius;
    for (int i = 0; i < 20000; ++i) {
      Vector u = rng.GaussianVector(dim, 1.0);
      const Vector x =
          u.normalized() * std::pow(rng.UniformOpen(), 1.0 / dim);
      covered &= NearestCenterDistance(*p, x) <= kRadius;
      covered &= NearestCenterDistance(*p, u.normalized()) <= kRadius;
    }
  }
  return {tv <= kDiscreteTv && worst <= kEps && covered,
          absl::StrFormat("TV %.4f, worst log ratio %.4f (eps %.1f), covering %s",
                          tv, worst, kEps, covered ? "ok" : "broken")};
}

std::string ReadAll(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome Determinism() {
  std::vector<ExperimentConfig> configs;
  auto base = [](ExperimentKind kind) {
    ExperimentConfig c;
    c.experiment = kind;
    c.trials = 4;
    c.knobs.polylog = false;
    return c;
  };
  configs.push_back(base(ExperimentKind::kSpiderEmpirical));
  {
    ExperimentConfig c = base(ExperimentKind::kSpiderPopulation);
    c.n = 1000000;
    c.trials = 2;
    c.knobs.batch_scale = 0.02;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = base(ExperimentKind::kAboveThreshold);
    c.n = 10000;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = base(ExperimentKind::kEmContinuous);
    c.problem = ProblemKind::kDoubleWell;
    c.dim = 1;
    c.epsilon = 0.4;
    c.em_steps = 20;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = base(ExperimentKind::kEmPacking);
    c.epsilon = 0.4;
    configs.push_back(c);
  }
  {
    ExperimentConfig c = base(ExperimentKind::kRateScan);
    c.trials = 2;
    configs.push_back(c);
  }
  const std::filesystem::path root =
      std::filesystem::temp_directory_path() / "dpnc_acceptance";
  std::filesystem::remove_all(root);
  int identical = 0, rows = 0, over_budget = 0, not_ok = 0, unverified = 0;
  std::string first_problem;
  for (const ExperimentConfig& c : configs) {
    const std::string name = ExperimentKindName(c.experiment);
    absl::StatusOr<ResultsTable> a = RunExperiment(c, 1);
    absl::StatusOr<ResultsTable> b = RunExperiment(c, 2);
    if (!a.ok() || !b.ok()) {
      if (first_problem.empty()) first_problem = name + " did not run";
      continue;
    }
    const std::filesystem::path da = root / (name + "_a"),
                                db = root / (name + "_b");
    if (!EmitReport(*a, da.string()).ok() ||
        !EmitReport(*b, db.string()).ok()) {
      if (first_problem.empty()) first_problem = name + " report failed";
      continue;
    }
    bool same = true;
    for (const char* file :
         {"results.csv", "summary.json", "plots.svg", "config.ini"}) {
      same &= ReadAll(da / file) == ReadAll(db / file);
    }
    identical += same;
    for (const ResultRow& row : a->rows) {
      ++rows;
      not_ok += row.status != "ok";
      over_budget += row.eps_spent > row.eps_budget * (1 + 1e-12) ||
                     row.delta_spent > row.delta_budget * (1 + 1e-12) ||
                     row.eps_budget > c.epsilon * (1 + 1e-12);
    }
    absl::StatusOr<VerifyReport> v = VerifyResultsCsv(ResultsToCsv(*a));
    unverified += !v.ok() || !v->ok();
  }
  std::filesystem::remove_all(root);
  const int kinds = static_cast<int>(configs.size());
  return {identical == kinds && over_budget == 0 && not_ok == 0 &&
              unverified == 0,
          absl::StrFormat("%d/%d kinds byte-identical, %d rows, %d over "
                          "budget, %d not ok, %d unverified%s",
                          identical, kinds, rows, over_budget, not_ok,
                          unverified,
                          first_problem.empty() ? "" : "; " + first_problem)};
}

}  // namespace
}  // namespace dpnc

int main() {
  using Clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](int id, const char* name,
                    const std::function<dpnc::Outcome()>& check) {
    const auto start = Clock::now();
    const dpnc::Outcome o = check();
    const double secs =
        std::chrono::duration<double>(Clock::now() - start).count();
    failures += !o.pass;
    std::printf("%s %2d %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", id, name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "accountant exactness", dpnc::Accountant);
  dpnc::SpiderSample spider;
  report(2, "spider drift invariants", [&] {
    spider = dpnc::SpiderInvariantRuns();
    return dpnc::Outcome{
        spider.runs == 100 && spider.drift_violations == 0 &&
            spider.over_count_runs == 0,
        absl::StrFormat("%d runs, %d O2 steps, %d entry-drift violations, "
                        "%d runs over the large-drift bound",
                        spider.runs, spider.o2_steps, spider.drift_violations,
                        spider.over_count_runs)};
  });
  report(3, "gradient tracking", [&] {
    return dpnc::Outcome{
        spider.tracking_ok >= 95,
        absl::StrFormat("%d/100 runs within gamma/4; worst error %.2f x gamma/4",
                        spider.tracking_ok, spider.worst_ratio)};
  });
  report(4, "saddle escape", dpnc::SaddleEscape);
  report(5, "abovethreshold soundness/completeness",
         dpnc::AboveThresholdCriterion);
  report(6, "rate scan slope", dpnc::RateScan);
  report(7, "restricted gaussian sampler", dpnc::RestrictedGaussian);
  report(8, "alternate sample convergence", dpnc::AlternateSampleCriterion);
  report(9, "lsi privacy certificate", dpnc::LsiCertificate);
  report(10, "discrete exponential mechanism", dpnc::DiscreteEm);
  report(11, "determinism and ledger", dpnc::Determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
