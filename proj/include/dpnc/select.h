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

#ifndef DPNC_SELECT_H_
#define DPNC_SELECT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "dpnc/objective.h"
#include "dpnc/privacy.h"
#include "dpnc/random.h"
#include "nlohmann/json.hpp"

namespace dpnc {

// Matrices up to this dimension get a dense eigensolve.
inline constexpr int kDenseEigenLimit = 512;

// Smallest eigenvalue of a symmetric matrix. Slightly asymmetric input is
// symmetrized by averaging with its transpose.
absl::StatusOr<double> SmallestEigenvalue(const Matrix& h,
                                          int dense_limit = kDenseEigenLimit);

struct SospReport {
  double grad_norm = 0;
  double smin = 0;
  double alpha = 0;
  double rho = 0;
  bool is_fosp = false;  // grad_norm <= alpha
  bool is_sosp = false;  // is_fosp and smin >= -sqrt(rho alpha)
};

SospReport CertifySosp(const Vector& grad, double hess_smin, double alpha,
                       double rho);
SospReport CertifySosp(double grad_norm, double hess_smin, double alpha,
                       double rho);

struct CandidateRecord {
  int64_t index = 0;
  double grad_norm = 0;
  double smin = 0;
  double noisy_grad = 0;  // grad_norm + Lap(8G / (n eps))
  double noisy_smin = 0;  // smin + Lap(8M / (n eps))
  bool passed = false;
};

struct SelectionResult {
  std::optional<int64_t> index;
  std::optional<Vector> point;
  double threshold_grad = 0;  // T1 hat
  double threshold_smin = 0;  // T2 hat
  double margin_grad = 0;     // 16 ln(2T / omega) G / (n eps)
  double margin_smin = 0;     // 16 ln(2T / omega) M / (n eps)
  std::vector<CandidateRecord> scanned;
  std::string halt_reason;

  nlohmann::json ToJson() const;
};

struct AboveThresholdOptions {
  // Test mode: every Laplace scale is forced to 0 while the margins stay.
  bool disable_noise = false;
};

// Private selection of an approximate SOSP from an ordered candidate list.
//   T1 = alpha + Lap(4G / (n eps)) + 16 ln(2T / omega) G / (n eps)
//   T2 = -sqrt(rho alpha) + Lap(4M / (n eps)) - 16 ln(2T / omega) M / (n eps)
// Candidate i passes when
//   |grad F_S(x_i)| + Lap(8G / (n eps)) <= T1  and
//   smin(hess F_S(x_i)) + Lap(8M / (n eps)) >= T2,
// and the scan halts at the first pass. The invocation costs (eps, 0) once.
// `ledger` may be null.
absl::StatusOr<SelectionResult> AboveThreshold(
    const std::vector<Vector>& points, const Problem& problem,
    const Dataset& dataset, const ObjectiveSpec& spec, double alpha,
    double epsilon, double omega, Rng& rng, Ledger* ledger = nullptr,
    const AboveThresholdOptions& options = {});

// (c_g G ln(d / omega) / sqrt(m), c_h M ln(d / omega) / sqrt(m)): deviation
// of an m-sample empirical gradient / Hessian from the population one.
std::pair<double, double> PopulationDeviationBound(int64_t m,
                                                   const ObjectiveSpec& spec,
                                                   double omega,
                                                   double c_g = 1.0,
                                                   double c_h = 1.0);

}  // namespace dpnc

#endif  // DPNC_SELECT_H_
