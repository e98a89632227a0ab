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

// Noisy gradient oracles of the first kind (gradient at a point) and second
// kind (gradient difference between two points).
//
// Empirical mode uses the full batch:
//   O1(x)    = grad F_D(x) + N(0, sigma1^2 I)
//   O2(x, y) = grad F_D(x) - grad F_D(y) + N(0, sigma2^2 I)
// Population mode draws fresh samples without replacement:
//   O1(x)    = mean_{z in S1} grad f(x; z) + N(0, sigma1^2 I)
//   O2(x, y) = mean_{z in S2} (grad f(x; z) - grad f(y; z))
//              + N(0, sigma2^2 |x - y|^2 I)

#ifndef DPNC_ORACLE_H_
#define DPNC_ORACLE_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "dpnc/objective.h"
#include "dpnc/privacy.h"
#include "dpnc/random.h"

namespace dpnc {

enum class OracleMode { kEmpirical, kPopulation };

const char* OracleModeName(OracleMode mode);

// Batch size sentinel meaning "the whole dataset" (empirical mode).
inline constexpr int64_t kFullBatch = 0;

struct OracleParams {
  double sigma1 = 0;
  double sigma2 = 0;
  int64_t b1 = kFullBatch;
  int64_t b2 = kFullBatch;
  // Induced norm-subGaussian constants; filled by InducedZetas.
  double zeta1 = 0;
  double zeta2 = 0;
};

// Norm-subGaussian constants of the oracles' error:
//   empirical:  zeta1 = sigma1 sqrt(d),  zeta2 = sigma2 sqrt(d)
//   population: zeta1 = c G sqrt(ln d) / sqrt(b1) + sigma1 sqrt(d)
//               zeta2 = c M sqrt(ln d) / sqrt(b2) + sigma2 sqrt(d)
std::pair<double, double> InducedZetas(const OracleParams& params,
                                       const ObjectiveSpec& spec,
                                       OracleMode mode, double c = 1.0);

// One population-mode zeta with a real-valued dimension.
double PopulationZeta(double scale, double dim, int64_t batch, double sigma,
                      double c);

// Serves dataset indices in a fixed random order. No index is ever served
// twice.
class SampleCursor {
 public:
  SampleCursor(std::vector<int> pool, Rng& rng);

  // The next `count` indices; DATA_EXHAUSTED-style OUT_OF_RANGE if fewer
  // remain.
  absl::StatusOr<std::span<const int>> Take(int64_t count);

  int64_t consumed() const { return next_; }
  int64_t remaining() const {
    return static_cast<int64_t>(order_.size()) - next_;
  }
  std::span<const int> ConsumedIndices() const {
    return std::span<const int>(order_).first(next_);
  }

 private:
  std::vector<int> order_;
  int64_t next_ = 0;
};

// Distinguishes cursor exhaustion from other failures.
bool IsDataExhausted(const absl::Status& status);

struct OracleCall {
  enum class Kind { kFirst, kSecond };
  Kind kind;
  int64_t batch;       // samples touched
  double noise_scale;  // per-coordinate Gaussian deviation actually used
};

class GradientOracle {
 public:
  // `cursor` is required in population mode and ignored otherwise.
  GradientOracle(const Problem& problem, const Dataset& dataset,
                 OracleMode mode, OracleParams params, Rng& rng,
                 SampleCursor* cursor = nullptr);

  // Every call of the given kind is recorded against a ledger reservation.
  void SetCharging(Ledger* ledger, std::string first_label,
                   std::string second_label);

  absl::StatusOr<Vector> First(const Vector& x);
  absl::StatusOr<Vector> Second(const Vector& x, const Vector& y);

  OracleMode mode() const { return mode_; }
  const OracleParams& params() const { return params_; }
  const std::vector<OracleCall>& calls() const { return calls_; }
  int64_t first_calls() const { return first_calls_; }
  int64_t second_calls() const { return second_calls_; }
  // Sum of per-access epsilons charged so far (before composition).
  double charged_epsilon() const { return charged_epsilon_; }

 private:
  absl::StatusOr<Vector> BatchMean(int64_t batch);
  absl::Status ChargeCall(const std::string& label);

  const Problem& problem_;
  const Dataset& dataset_;
  OracleMode mode_;
  OracleParams params_;
  Rng& rng_;
  SampleCursor* cursor_;
  Vector full_mean_;
  Ledger* ledger_ = nullptr;
  std::string first_label_, second_label_;
  std::vector<OracleCall> calls_;
  int64_t first_calls_ = 0;
  int64_t second_calls_ = 0;
  double charged_epsilon_ = 0;
};

}  // namespace dpnc

#endif  // DPNC_ORACLE_H_
