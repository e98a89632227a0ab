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

#include "dpnc/select.h"

#include <algorithm>
#include <cmath>

#include "absl/strings/str_format.h"
#include <Eigen/Eigenvalues>

namespace dpnc {
namespace {

constexpr double kSymmetryTolerance = 1e-10;
constexpr double kPowerTolerance = 1e-8;
constexpr int kPowerMaxIterations = 100000;

// Largest eigenvalue of a symmetric positive semidefinite matrix by power
// iteration, stopping once the Rayleigh quotient settles to relative
// tolerance.
double PowerIteration(const Matrix& a) {
  Vector v = Vector::Ones(a.rows()) / std::sqrt(static_cast<double>(a.rows()));
  // A fixed but irregular start avoids landing orthogonal to the top
  // eigenvector for structured inputs.
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v(i) += 1e-3 * std::sin(static_cast<double>(i + 1));
  }
  v.normalize();
  double lambda = v.dot(a * v);
  for (int iter = 0; iter < kPowerMaxIterations; ++iter) {
    Vector w = a * v;
    const double norm = w.norm();
    if (norm == 0) return 0;
    v = w / norm;
    const double next = v.dot(a * v);
    if (std::abs(next - lambda) <= kPowerTolerance * std::abs(next)) {
      return next;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

absl::StatusOr<double> SmallestEigenvalue(const Matrix& h, int dense_limit) {
  if (h.rows() != h.cols() || h.rows() == 0) {
    return absl::InvalidArgumentError("smallest eigenvalue needs a square matrix");
  }
  if (!h.allFinite()) {
    return absl::InvalidArgumentError("matrix has non-finite entries");
  }
  Matrix sym = h;
  if ((h - h.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance) {
    sym = 0.5 * (h + h.transpose());
  }
  if (sym.rows() <= dense_limit) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym,
                                                 Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
  }
  // Shift by a Gershgorin bound so that shift*I - H is PSD; its top
  // eigenvalue is shift - lambda_min(H).
  const double shift = sym.cwiseAbs().rowwise().sum().maxCoeff();
  const Matrix shifted =
      shift * Matrix::Identity(sym.rows(), sym.cols()) - sym;
  return shift - PowerIteration(shifted);
}

SospReport CertifySosp(double grad_norm, double hess_smin, double alpha,
                       double rho) {
  SospReport report;
  report.grad_norm = grad_norm;
  report.smin = hess_smin;
  report.alpha = alpha;
  report.rho = rho;
  report.is_fosp = grad_norm <= alpha;
  report.is_sosp = report.is_fosp && hess_smin >= -std::sqrt(rho * alpha);
  return report;
}

SospReport CertifySosp(const Vector& grad, double hess_smin, double alpha,
                       double rho) {
  return CertifySosp(grad.norm(), hess_smin, alpha, rho);
}

nlohmann::json SelectionResult::ToJson() const {
  nlohmann::json scanned_json = nlohmann::json::array();
  for (const CandidateRecord& c : scanned) {
    scanned_json.push_back({{"index", c.index},
                            {"grad_norm", c.grad_norm},
                            {"smin", c.smin},
                            {"noisy_grad", c.noisy_grad},
                            {"noisy_smin", c.noisy_smin},
                            {"passed", c.passed}});
  }
  nlohmann::json j = {{"threshold_grad", threshold_grad},
                      {"threshold_smin", threshold_smin},
                      {"margin_grad", margin_grad},
                      {"margin_smin", margin_smin},
                      {"halt_reason", halt_reason},
                      {"scanned", std::move(scanned_json)}};
  j["index"] = index ? nlohmann::json(*index) : nlohmann::json(nullptr);
  return j;
}

absl::StatusOr<SelectionResult> AboveThreshold(
    const std::vector<Vector>& points, const Problem& problem,
    const Dataset& dataset, const ObjectiveSpec& spec, double alpha,
    double epsilon, double omega, Rng& rng, Ledger* ledger,
    const AboveThresholdOptions& options) {
  if (dataset.size() == 0) {
    return absl::InvalidArgumentError("selection dataset is empty");
  }
  if (!(epsilon > 0) || !(omega > 0 && omega < 1) || !(alpha > 0)) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "selection needs epsilon > 0, omega in (0, 1), alpha > 0; got "
        "(%g, %g, %g)",
        epsilon, omega, alpha));
  }
  if (ledger != nullptr) {
    if (absl::Status s = ledger->Charge("above_threshold", epsilon, 0);
        !s.ok()) {
      return s;
    }
  }
  const double n_eps = static_cast<double>(dataset.size()) * epsilon;
  const double g = spec.lipschitz, m = spec.smooth;
  const double count = static_cast<double>(std::max<size_t>(points.size(), 1));
  const double log_term = std::log(2 * count / omega);
  const double noise = options.disable_noise ? 0.0 : 1.0;

  SelectionResult result;
  result.margin_grad = 16 * log_term * g / n_eps;
  result.margin_smin = 16 * log_term * m / n_eps;
  result.threshold_grad =
      alpha + rng.Laplace(noise * 4 * g / n_eps) + result.margin_grad;
  result.threshold_smin = -std::sqrt(spec.hessian_lipschitz * alpha) +
                          rng.Laplace(noise * 4 * m / n_eps) -
                          result.margin_smin;

  const Vector z_mean = dataset.samples.rowwise().mean();
  for (size_t i = 0; i < points.size(); ++i) {
    const Vector& x = points[i];
    CandidateRecord c;
    c.index = static_cast<int64_t>(i);
    c.grad_norm = (BaseGradient(problem, x) + z_mean).norm();
    absl::StatusOr<double> smin = SmallestEigenvalue(BaseHessian(problem, x));
    if (!smin.ok()) return smin.status();
    c.smin = *smin;
    c.noisy_grad = c.grad_norm + rng.Laplace(noise * 8 * g / n_eps);
    c.noisy_smin = c.smin + rng.Laplace(noise * 8 * m / n_eps);
    c.passed = c.noisy_grad <= result.threshold_grad &&
               c.noisy_smin >= result.threshold_smin;
    result.scanned.push_back(c);
    if (c.passed) {
      result.index = c.index;
      result.point = x;
      result.halt_reason = "passed";
      return result;
    }
  }
  result.halt_reason = "exhausted";
  return result;
}

std::pair<double, double> PopulationDeviationBound(int64_t m,
                                                   const ObjectiveSpec& spec,
                                                   double omega, double c_g,
                                                   double c_h) {
  const double scale = std::log(spec.dim / omega) /
                       std::sqrt(static_cast<double>(m));
  return {c_g * spec.lipschitz * scale, c_h * spec.smooth * scale};
}

}  // namespace dpnc
