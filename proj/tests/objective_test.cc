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


#include "dpnc/objective.h"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

namespace dpnc {
namespace {

Problem MustProblem(ProblemKind kind, int dim, double p = 0, uint64_t seed = 1,
                    double a = 1.0) {
  absl::StatusOr<Problem> problem = MakeProblem(kind, dim, p, seed, a);
  EXPECT_TRUE(problem.ok()) << problem.status();
  return *problem;
}

Vector Vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  int i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

TEST(ProblemKindTest, NamesRoundTrip) {
  for (ProblemKind kind : {ProblemKind::kQuadratic, ProblemKind::kCubicSaddle,
                           ProblemKind::kDoubleWell}) {
    absl::StatusOr<ProblemKind> parsed = ParseProblemKind(ProblemKindName(kind));
    ASSERT_TRUE(parsed.ok());
    EXPECT_EQ(*parsed, kind);
  }
  EXPECT_FALSE(ParseProblemKind("banana").ok());
}

TEST(ObjectiveTest, QuadraticIdentity) {
  const Problem q = MustProblem(ProblemKind::kQuadratic, 2);
  const Vector x = Vec({0.3, -0.4});
  EXPECT_DOUBLE_EQ(BaseValue(q, x), 0.125);
  EXPECT_TRUE(BaseGradient(q, Vector::Zero(2)).isZero());
  EXPECT_TRUE(BaseHessian(q, x).isIdentity());
}

TEST(ObjectiveTest, CubicSaddleCriticalPoints) {
  const Problem c = MustProblem(ProblemKind::kCubicSaddle, 2);
  EXPECT_NEAR(BaseGradient(c, Vec({1, 0})).norm(), 0, 1e-15);
  EXPECT_NEAR(BaseGradient(c, Vec({-1, 0})).norm(), 0, 1e-15);
  const Matrix h = BaseHessian(c, Vec({-1, 0}));
  EXPECT_DOUBLE_EQ(h(0, 0), -2);
  EXPECT_DOUBLE_EQ(h(1, 1), 1);
  EXPECT_DOUBLE_EQ(h(0, 1), 0);
  const Matrix at_min = BaseHessian(c, Vec({1, 0}));
  EXPECT_DOUBLE_EQ(at_min(0, 0), 2);
  EXPECT_DOUBLE_EQ(at_min(1, 1), 1);
}

TEST(ObjectiveTest, DoubleWellMinima) {
  const Problem w = MustProblem(ProblemKind::kDoubleWell, 1);
  EXPECT_DOUBLE_EQ(BaseValue(w, Vec({1})), 0);
  EXPECT_DOUBLE_EQ(BaseValue(w, Vec({-1})), 0);
  EXPECT_DOUBLE_EQ(BaseGradient(w, Vec({1}))(0), 0);
  EXPECT_GT(BaseValue(w, Vec({0})), 0);
}

// Central differences on every kind, including the linear perturbation.
TEST(ObjectiveTest, DerivativesMatchFiniteDifferences) {
  constexpr double kH = 1e-5;
  for (ProblemKind kind : {ProblemKind::kQuadratic, ProblemKind::kCubicSaddle,
                           ProblemKind::kDoubleWell}) {
    const Problem p = MustProblem(kind, 3, 0.1, 9, 1.3);
    absl::StatusOr<Dataset> data = MakeDataset(p, 17, 4);
    ASSERT_TRUE(data.ok());
    const Vector x = Vec({0.7, -0.2, 0.5});
    absl::StatusOr<Evaluation> e = Evaluate(p, *data, x, true);
    ASSERT_TRUE(e.ok());
    for (int i = 0; i < 3; ++i) {
      Vector step = Vector::Zero(3);
      step(i) = kH;
      auto value = [&](const Vector& at) { return Evaluate(p, *data, at, true); };
      absl::StatusOr<Evaluation> plus = value(x + step);
      absl::StatusOr<Evaluation> minus = value(x - step);
      ASSERT_TRUE(plus.ok() && minus.ok());
      EXPECT_NEAR((plus->value - minus->value) / (2 * kH), e->gradient(i),
                  1e-7);
      const Vector col = (plus->gradient - minus->gradient) / (2 * kH);
      for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(col(j), (*e->hessian)(j, i), 1e-6);
      }
    }
  }
}

TEST(ObjectiveTest, EmpiricalGradientAddsMeanPerturbation) {
  const Problem p = MustProblem(ProblemKind::kCubicSaddle, 2, 0.1, 3);
  absl::StatusOr<Dataset> data = MakeDataset(p, 50, 8);
  ASSERT_TRUE(data.ok());
  const Vector x = Vec({-1, 0});
  absl::StatusOr<Evaluation> e = Evaluate(p, *data, x, false);
  ASSERT_TRUE(e.ok());
  const Vector mean = data->samples.rowwise().mean();
  EXPECT_NEAR((e->gradient - mean).norm(), 0, 1e-14);
  EXPECT_FALSE(e->hessian.has_value());
}

TEST(ObjectiveTest, SingletonSubsetIsPerSampleLoss) {
  const Problem p = MustProblem(ProblemKind::kDoubleWell, 2, 0.2, 3);
  absl::StatusOr<Dataset> data = MakeDataset(p, 10, 5);
  ASSERT_TRUE(data.ok());
  const Vector x = Vec({0.4, 0.9});
  const std::vector<int> one = {6};
  absl::StatusOr<Evaluation> e = Evaluate(p, *data, one, x, true);
  ASSERT_TRUE(e.ok());
  const Evaluation direct = EvaluateSample(p, data->samples.col(6), x, true);
  EXPECT_DOUBLE_EQ(e->value, direct.value);
  EXPECT_TRUE(e->gradient.isApprox(direct.gradient));
}

TEST(ObjectiveTest, PopulationIsBaseShape) {
  const Problem p = MustProblem(ProblemKind::kCubicSaddle, 2, 0.1);
  const Vector x = Vec({0.2, 0.3});
  const Evaluation e = EvaluatePopulation(p, x, true);
  EXPECT_DOUBLE_EQ(e.value, BaseValue(p, x));
  EXPECT_TRUE(e.gradient.isApprox(BaseGradient(p, x)));
}

TEST(ObjectiveTest, DatasetWithinBoxAndSeeded) {
  const Problem p = MustProblem(ProblemKind::kQuadratic, 3, 0.25);
  absl::StatusOr<Dataset> a = MakeDataset(p, 1000, 12);
  absl::StatusOr<Dataset> b = MakeDataset(p, 1000, 12);
  ASSERT_TRUE(a.ok() && b.ok());
  EXPECT_EQ(a->samples, b->samples);
  EXPECT_LE(a->samples.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_FALSE(MakeDataset(p, 0, 1).ok());
}

TEST(ProblemConstantsTest, CubicRho) {
  const Problem c = MustProblem(ProblemKind::kCubicSaddle, 2);
  const ObjectiveSpec spec = ProblemConstants(c, 4.0);
  EXPECT_DOUBLE_EQ(spec.hessian_lipschitz, 2.0);
}

TEST(ProblemConstantsTest, QuadraticUnitBall) {
  const Problem q = MustProblem(ProblemKind::kQuadratic, 2);
  const ObjectiveSpec spec = ProblemConstants(q, 2.0, 1e-3);
  EXPECT_DOUBLE_EQ(spec.lipschitz, 1.0);
  EXPECT_DOUBLE_EQ(spec.smooth, 1.0);
  EXPECT_DOUBLE_EQ(spec.hessian_lipschitz, 1e-3);
}

TEST(ProblemConstantsTest, PerturbationRaisesLipschitz) {
  for (ProblemKind kind : {ProblemKind::kQuadratic, ProblemKind::kCubicSaddle,
                           ProblemKind::kDoubleWell}) {
    const ObjectiveSpec plain =
        ProblemConstants(MustProblem(kind, 3, 0.0), 4.0);
    const ObjectiveSpec noisy =
        ProblemConstants(MustProblem(kind, 3, 0.2), 4.0);
    EXPECT_NEAR(noisy.lipschitz - plain.lipschitz, 0.2 * std::sqrt(3.0), 1e-12);
  }
}

// The constants must dominate what a dense scan of the ball finds.
TEST(ProblemConstantsTest, BoundsHoldOnGrid) {
  for (ProblemKind kind : {ProblemKind::kQuadratic, ProblemKind::kCubicSaddle,
                           ProblemKind::kDoubleWell}) {
    const Problem p = MustProblem(kind, 2, 0.0, 1, 1.0);
    const ObjectiveSpec spec = ProblemConstants(p, 4.0);
    double g_max = 0, m_max = 0, lo = 1e300, hi = -1e300;
    for (int i = -100; i <= 100; ++i) {
      for (int j = -100; j <= 100; ++j) {
        const Vector x = Vec({0.02 * i, 0.02 * j});
        if (x.norm() > 2) continue;
        g_max = std::max(g_max, BaseGradient(p, x).norm());
        m_max = std::max(m_max, BaseHessian(p, x).operatorNorm());
        lo = std::min(lo, BaseValue(p, x));
        hi = std::max(hi, BaseValue(p, x));
      }
    }
    EXPECT_GE(spec.lipschitz, g_max * (1 - 1e-12)) << ProblemKindName(kind);
    EXPECT_GE(spec.smooth, m_max * (1 - 1e-12)) << ProblemKindName(kind);
    EXPECT_GE(spec.value_range, (hi - lo) * (1 - 1e-12)) << ProblemKindName(kind);
  }
}

TEST(DatasetCsvTest, RoundTrip) {
  const Problem p = MustProblem(ProblemKind::kDoubleWell, 2, 0.3, 77, 1.0);
  absl::StatusOr<Dataset> data = MakeDataset(p, 25, 6);
  ASSERT_TRUE(data.ok());
  absl::StatusOr<LoadedDataset> back = DatasetFromCsv(DatasetToCsv(p, *data));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(back->dataset.samples, data->samples);
  EXPECT_EQ(back->problem.kind, p.kind);
  EXPECT_EQ(back->problem.dim, 2);
  EXPECT_FALSE(DatasetFromCsv("garbage").ok());
}

TEST(MinimizeOnBallTest, FindsConstrainedMinimum) {
  // min of x1 on the unit disk is -1 at (-1, 0).
  absl::StatusOr<GridMinimum> m = MinimizeOnBall(
      [](const Vector& x) { return x(0); }, 2, 1.0);
  ASSERT_TRUE(m.ok());
  EXPECT_NEAR(m->value, -1.0, 1e-4);
  absl::StatusOr<GridMinimum> w = MinimizeOnBall(
      [](const Vector& x) { return (x(0) - 0.3) * (x(0) - 0.3); }, 1, 2.0);
  ASSERT_TRUE(w.ok());
  EXPECT_NEAR(w->argmin(0), 0.3, 1e-4);
  EXPECT_FALSE(
      MinimizeOnBall([](const Vector&) { return 0.0; }, 3, 1.0).ok());
}

}  // namespace
}  // namespace dpnc
