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

#include "dpnc/oracle.h"

#include <algorithm>
#include <cmath>
#include <optional>

#include "absl/strings/match.h"
#include "absl/strings/str_format.h"

namespace dpnc {
namespace {

constexpr char kExhaustedPrefix[] = "data exhausted:";

}  // namespace

const char* OracleModeName(OracleMode mode) {
  return mode == OracleMode::kEmpirical ? "empirical" : "population";
}

double PopulationZeta(double scale, double dim, int64_t batch, double sigma,
                      double c) {
  const double log_d = std::log(dim);
  const double sampling =
      batch > 0 ? c * scale * std::sqrt(std::max(log_d, 0.0)) /
                      std::sqrt(static_cast<double>(batch))
                : 0.0;
  return sampling + sigma * std::sqrt(dim);
}

std::pair<double, double> InducedZetas(const OracleParams& params,
                                       const ObjectiveSpec& spec,
                                       OracleMode mode, double c) {
  const double d = spec.dim;
  if (mode == OracleMode::kEmpirical) {
    return {params.sigma1 * std::sqrt(d), params.sigma2 * std::sqrt(d)};
  }
  return {PopulationZeta(spec.lipschitz, d, params.b1, params.sigma1, c),
          PopulationZeta(spec.smooth, d, params.b2, params.sigma2, c)};
}

SampleCursor::SampleCursor(std::vector<int> pool, Rng& rng)
    : order_(std::move(pool)) {
  std::shuffle(order_.begin(), order_.end(), rng.engine());
}

absl::StatusOr<std::span<const int>> SampleCursor::Take(int64_t count) {
  if (count > remaining()) {
    return absl::OutOfRangeError(absl::StrFormat(
        "%s batch of %d requested, %d unconsumed samples left",
        kExhaustedPrefix, count, remaining()));
  }
  std::span<const int> batch =
      std::span<const int>(order_).subspan(next_, count);
  next_ += count;
  return batch;
}

bool IsDataExhausted(const absl::Status& status) {
  return absl::IsOutOfRange(status) &&
         absl::StartsWith(status.message(), kExhaustedPrefix);
}

GradientOracle::GradientOracle(const Problem& problem, const Dataset& dataset,
                               OracleMode mode, OracleParams params, Rng& rng,
                               SampleCursor* cursor)
    : problem_(problem),
      dataset_(dataset),
      mode_(mode),
      params_(params),
      rng_(rng),
      cursor_(cursor) {
  full_mean_ = dataset_.samples.rowwise().mean();
}

void GradientOracle::SetCharging(Ledger* ledger, std::string first_label,
                                 std::string second_label) {
  ledger_ = ledger;
  first_label_ = std::move(first_label);
  second_label_ = std::move(second_label);
}

absl::Status GradientOracle::ChargeCall(const std::string& label) {
  if (ledger_ == nullptr) return absl::OkStatus();
  if (absl::Status s = ledger_->Draw(label); !s.ok()) return s;
  if (std::optional<Budget> cost = ledger_->PerAccess(label)) {
    charged_epsilon_ += cost->epsilon;
  }
  return absl::OkStatus();
}

absl::StatusOr<Vector> GradientOracle::BatchMean(int64_t batch) {
  if (mode_ == OracleMode::kEmpirical || batch == kFullBatch) {
    return full_mean_;
  }
  if (cursor_ == nullptr) {
    return absl::FailedPreconditionError(
        "population oracle constructed without a sample cursor");
  }
  absl::StatusOr<std::span<const int>> indices = cursor_->Take(batch);
  if (!indices.ok()) return indices.status();
  Vector mean = Vector::Zero(dataset_.dim());
  for (int idx : *indices) mean += dataset_.samples.col(idx);
  return Vector(mean / static_cast<double>(batch));
}

absl::StatusOr<Vector> GradientOracle::First(const Vector& x) {
  const int64_t batch =
      mode_ == OracleMode::kEmpirical ? kFullBatch : params_.b1;
  absl::StatusOr<Vector> z_mean = BatchMean(batch);
  if (!z_mean.ok()) return z_mean.status();
  if (absl::Status s = ChargeCall(first_label_); !s.ok()) return s;
  // The per-sample gradient is grad g(x) + z, so the batch average only
  // needs the batch mean of z.
  Vector out = BaseGradient(problem_, x) + *z_mean;
  if (params_.sigma1 > 0) {
    out += rng_.GaussianVector(static_cast<int>(x.size()), params_.sigma1);
  }
  ++first_calls_;
  calls_.push_back({OracleCall::Kind::kFirst,
                    batch == kFullBatch ? dataset_.size() : batch,
                    params_.sigma1});
  return out;
}

absl::StatusOr<Vector> GradientOracle::Second(const Vector& x,
                                              const Vector& y) {
  const int64_t batch =
      mode_ == OracleMode::kEmpirical ? kFullBatch : params_.b2;
  absl::StatusOr<Vector> z_mean = BatchMean(batch);
  if (!z_mean.ok()) return z_mean.status();
  if (absl::Status s = ChargeCall(second_label_); !s.ok()) return s;
  // The linear term cancels in the difference; sampling the batch still
  // consumes it.
  Vector out = BaseGradient(problem_, x) - BaseGradient(problem_, y);
  const double scale = mode_ == OracleMode::kEmpirical
                           ? params_.sigma2
                           : params_.sigma2 * (x - y).norm();
  if (scale > 0) {
    out += rng_.GaussianVector(static_cast<int>(x.size()), scale);
  }
  ++second_calls_;
  calls_.push_back({OracleCall::Kind::kSecond,
                    batch == kFullBatch ? dataset_.size() : batch, scale});
  return out;
}

}  // namespace dpnc
