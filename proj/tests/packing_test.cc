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


#include "dpnc/packing.h"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

namespace dpnc {
namespace {

// Grid points k s (k integer) inside the ball, enumerated independently.
int64_t BruteForceGridCount(int dim, double radius, double s) {
  const int k = static_cast<int>(std::ceil(radius / s)) + 1;
  std::vector<int> idx(dim, -k);
  int64_t count = 0;
  while (true) {
    double sq = 0;
    for (int i : idx) sq += (i * s) * (i * s);
    if (std::sqrt(sq) <= radius * (1 + 1e-12)) ++count;
    int axis = 0;
    while (axis < dim && ++idx[axis] > k) idx[axis++] = -k;
    if (axis == dim) break;
  }
  return count;
}

TEST(BuildPackingTest, OneDimensionalExample) {
  absl::StatusOr<Packing> p = BuildPacking(1, 2.0, 0.5);
  ASSERT_TRUE(p.ok());
  EXPECT_DOUBLE_EQ(p->spacing, 1.0);
  EXPECT_DOUBLE_EQ(p->covering_radius_cert, 0.5);
  ASSERT_EQ(p->centers.size(), 3u);
  std::vector<double> xs;
  for (const Vector& c : p->centers) xs.push_back(c(0));
  std::sort(xs.begin(), xs.end());
  EXPECT_EQ(xs, (std::vector<double>{-1, 0, 1}));
}

TEST(BuildPackingTest, SingleCenterAtHalfDiameter) {
  absl::StatusOr<Packing> p = BuildPacking(3, 2.0, 1.0);
  ASSERT_TRUE(p.ok());
  ASSERT_EQ(p->centers.size(), 1u);
  EXPECT_TRUE(p->centers[0].isZero());
}

TEST(BuildPackingTest, TwoDimensionalCountMatchesEnumeration) {
  absl::StatusOr<Packing> p = BuildPacking(2, 2.0, 0.5);
  ASSERT_TRUE(p.ok());
  EXPECT_NEAR(p->spacing, 1 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(static_cast<int64_t>(p->centers.size()),
            BruteForceGridCount(2, 1.0, p->spacing));
}

TEST(BuildPackingTest, BoundaryCentersOnlyAdded) {
  for (int dim : {2, 3}) {
    absl::StatusOr<Packing> p = BuildPacking(dim, 2.0, 0.3);
    ASSERT_TRUE(p.ok());
    int64_t inside = 0;
    for (const Vector& c : p->centers) {
      ASSERT_LE(c.norm(), 1.0 + 1e-12);
      // Grid points are integer multiples of the spacing.
      const Vector k = c / p->spacing;
      if ((k - k.array().round().matrix()).norm() < 1e-9) ++inside;
    }
    EXPECT_GE(inside, BruteForceGridCount(dim, 1.0, p->spacing));
  }
}

TEST(BuildPackingTest, CoveringCertificate) {
  for (int dim : {1, 2, 3}) {
    const double r = 0.35;
    absl::StatusOr<Packing> p = BuildPacking(dim, 2.0, r);
    ASSERT_TRUE(p.ok());
    EXPECT_LE(p->covering_radius_cert, r * (1 + 1e-12));
    Rng rng(dim);
    double worst = 0;
    for (int i = 0; i < 100000; ++i) {
      Vector x = rng.GaussianVector(dim, 1.0);
      x *= std::pow(rng.UniformOpen(), 1.0 / dim) / x.norm();
      worst = std::max(worst, NearestCenterDistance(*p, x));
    }
    EXPECT_LE(worst, r) << "dim " << dim;
  }
}

TEST(BuildPackingTest, RejectsBadArguments) {
  EXPECT_FALSE(BuildPacking(5, 2.0, 0.5).ok());
  EXPECT_FALSE(BuildPacking(2, 2.0, 1.5).ok());
  EXPECT_FALSE(BuildPacking(2, 2.0, 0).ok());
  absl::StatusOr<Packing> huge = BuildPacking(4, 2.0, 1e-3);
  EXPECT_EQ(huge.status().code(), absl::StatusCode::kResourceExhausted);
}

TEST(BuildPackingTest, DefaultRadius) {
  EXPECT_DOUBLE_EQ(DefaultPackingRadius(2.0, 1, 1.0, 100), 0.02);
  EXPECT_DOUBLE_EQ(DefaultPackingRadius(2.0, 3, 0.1, 10), 1.0);
}

TEST(PackingCsvTest, RoundTrip) {
  absl::StatusOr<Packing> p = BuildPacking(2, 3.0, 0.4);
  ASSERT_TRUE(p.ok());
  absl::StatusOr<Packing> back = PackingFromCsv(PackingToCsv(*p));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(back->dim, p->dim);
  EXPECT_EQ(back->spacing, p->spacing);
  EXPECT_EQ(back->covering_radius_cert, p->covering_radius_cert);
  ASSERT_EQ(back->centers.size(), p->centers.size());
  for (size_t i = 0; i < p->centers.size(); ++i) {
    EXPECT_EQ(back->centers[i], p->centers[i]);
  }
  EXPECT_FALSE(PackingFromCsv("1,2\n").ok());
}

TEST(DiscreteEmTest, ThreeCenterWeights) {
  absl::StatusOr<std::vector<double>> p =
      DiscreteEmProbabilities({0, 0.1, 0.2}, 2, 10, 1, 1);
  ASSERT_TRUE(p.ok());
  const double z = 1 + std::exp(-1) + std::exp(-2);
  EXPECT_NEAR((*p)[0], 1 / z, 1e-15);
  EXPECT_NEAR((*p)[1], std::exp(-1) / z, 1e-15);
  EXPECT_NEAR((*p)[2], std::exp(-2) / z, 1e-15);
}

TEST(DiscreteEmTest, ZeroEpsilonIsUniformAndShiftInvariant) {
  absl::StatusOr<std::vector<double>> p =
      DiscreteEmProbabilities({3, -1, 7, 0.5}, 0, 10, 1, 1);
  ASSERT_TRUE(p.ok());
  for (double v : *p) EXPECT_DOUBLE_EQ(v, 0.25);
  const std::vector<double> risks = {0.125, 0.25, 0.5};
  std::vector<double> shifted = risks;
  for (double& v : shifted) v += 1024;
  EXPECT_EQ(*DiscreteEmProbabilities(risks, 1, 30, 1, 1),
            *DiscreteEmProbabilities(shifted, 1, 30, 1, 1));
  EXPECT_FALSE(DiscreteEmProbabilities({}, 1, 1, 1, 1).ok());
}

TEST(DiscreteEmTest, UnderflowIsAvoided) {
  absl::StatusOr<std::vector<double>> p =
      DiscreteEmProbabilities({1e6, 1e6 + 1}, 1, 1000000, 1, 1);
  ASSERT_TRUE(p.ok());
  EXPECT_DOUBLE_EQ((*p)[0], 1.0);
}

TEST(DiscreteEmTest, SingleCenter) {
  Packing net;
  net.dim = 1;
  net.centers = {Vector::Constant(1, 0.2)};
  const Problem p = *MakeProblem(ProblemKind::kDoubleWell, 1, 0.1, 1);
  const Dataset data = *MakeDataset(p, 10, 1);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    absl::StatusOr<DiscreteSelection> s =
        DiscreteEmSelect(net, p, data, 1.0, 1.0, 2.0, rng);
    ASSERT_TRUE(s.ok());
    EXPECT_EQ(s->index, 0);
  }
}

TEST(DiscreteEmTest, NeighboringDatasetsRatio) {
  const Problem p = *MakeProblem(ProblemKind::kDoubleWell, 2, 0.3, 1);
  const ObjectiveSpec spec = ProblemConstants(p, 2.0);
  absl::StatusOr<Packing> net = BuildPacking(2, 2.0, 0.1);
  ASSERT_TRUE(net.ok());
  ASSERT_LE(net->centers.size(), 1000u);
  Dataset a = *MakeDataset(p, 50, 2);
  Dataset b = a;
  b.samples.col(7) = Vector::Constant(2, -0.3);
  constexpr double kEps = 0.7;
  Rng rng(1);
  absl::StatusOr<DiscreteSelection> sa = DiscreteEmSelect(
      *net, p, a, kEps, spec.lipschitz, 2.0, rng);
  absl::StatusOr<DiscreteSelection> sb = DiscreteEmSelect(
      *net, p, b, kEps, spec.lipschitz, 2.0, rng);
  ASSERT_TRUE(sa.ok() && sb.ok());
  double worst = 0;
  for (size_t i = 0; i < net->centers.size(); ++i) {
    worst = std::max(worst, std::abs(std::log(sa->probabilities[i] /
                                              sb->probabilities[i])));
  }
  EXPECT_LE(worst, kEps);
}

TEST(DiscreteEmTest, ChargesLedger) {
  const Problem p = *MakeProblem(ProblemKind::kQuadratic, 1, 0.1, 1);
  const Dataset data = *MakeDataset(p, 10, 1);
  absl::StatusOr<Packing> net = BuildPacking(1, 2.0, 0.25);
  Ledger ledger({0.5, 0});
  Rng rng(1);
  ASSERT_TRUE(
      DiscreteEmSelect(*net, p, data, 0.5, 1.1, 2.0, rng, &ledger).ok());
  EXPECT_EQ(ledger.CountOf("em/packing"), 1);
  EXPECT_FALSE(
      DiscreteEmSelect(*net, p, data, 0.5, 1.1, 2.0, rng, &ledger).ok());
}

TEST(PackingRiskTest, LargeEpsilonExcessWithinDiscretization) {
  const Problem p = *MakeProblem(ProblemKind::kDoubleWell, 2, 0, 1);
  const Dataset data = *MakeDataset(p, 10, 1);
  const ObjectiveSpec spec = ProblemConstants(p, 3.0);
  constexpr double kR = 0.1;
  absl::StatusOr<Packing> net = BuildPacking(2, 3.0, kR);
  ASSERT_TRUE(net.ok());
  Rng rng(2);
  absl::StatusOr<DiscreteSelection> s =
      DiscreteEmSelect(*net, p, data, 1e9, spec.lipschitz, 3.0, rng);
  ASSERT_TRUE(s.ok());
  absl::StatusOr<PackingRiskReport> risk =
      ComputePackingRisk(s->point, p, data, 3.0);
  ASSERT_TRUE(risk.ok());
  EXPECT_LE(risk->empirical_excess, spec.lipschitz * kR);
  EXPECT_GE(risk->empirical_excess, -1e-9);
}

TEST(PackingRiskTest, DoubleWellSuite) {
  const Problem p = *MakeProblem(ProblemKind::kDoubleWell, 1, 0.2, 1);
  constexpr double kD = 3.0, kEps = 1.0;
  constexpr int64_t kN = 100;
  const ObjectiveSpec spec = ProblemConstants(p, kD);
  const double r = DefaultPackingRadius(kD, 1, kEps, kN);
  absl::StatusOr<Packing> net = BuildPacking(1, kD, r);
  ASSERT_TRUE(net.ok());
  double emp = 0, pop = 0;
  constexpr int kRuns = 200;
  for (int run = 0; run < kRuns; ++run) {
    const Dataset data = *MakeDataset(p, kN, DeriveSeed(3, run));
    Rng rng(DeriveSeed(4, run));
    absl::StatusOr<DiscreteSelection> s =
        DiscreteEmSelect(*net, p, data, kEps, spec.lipschitz, kD, rng);
    ASSERT_TRUE(s.ok());
    absl::StatusOr<PackingRiskReport> risk =
        ComputePackingRisk(s->point, p, data, kD);
    ASSERT_TRUE(risk.ok());
    emp += risk->empirical_excess;
    pop += risk->population_excess;
  }
  emp /= kRuns;
  pop /= kRuns;
  const double gd = spec.lipschitz * kD;
  const double en = kEps * kN;
  EXPECT_LE(emp, 5 * gd * (std::log(en) / en + r * spec.lipschitz / gd));
  EXPECT_GE(pop, emp - 0.05);
}

}  // namespace
}  // namespace dpnc
