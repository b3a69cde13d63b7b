/*
 * Copyright 2026 The dflsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "dflsim/error.h"
#include "dflsim/privacy.h"
#include "dflsim/protocol.h"
#include "test_util.h"

namespace dflsim {
namespace {

WeightMatrix Ring(std::size_t n) {
  return SinkhornKnopp(BuildTopology(TopologyKind::kRing, n));
}

// W^t beta by t repeated matrix-vector products.
DenseVector PowerApply(const WeightMatrix& w, const DenseVector& beta, int t) {
  DenseVector v = beta;
  for (int s = 0; s < t; ++s) {
    DenseVector next(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t j = 0; j < v.size(); ++j) next[i] += w(i, j) * v[j];
    }
    v = next;
  }
  return v;
}

TEST(BudgetTest, SingleClientScalarCase) {
  const WeightMatrix w{DenseMatrix::Identity(1)};
  const PrivacyParams p{{0.025}, {1.0}};
  for (int t : {0, 1, 10}) {
    EXPECT_NEAR(BudgetLppa(p, w, t)[0], 1.0 / (std::sqrt(2.0) * 0.025), 1e-12);
    EXPECT_NEAR(BudgetLppa(p, w, t)[0], 28.284271247461902, 1e-9);
    EXPECT_EQ(BudgetDp(p, w, t)[0], 1.0 / 0.025);
  }
}

TEST(BudgetTest, RoundZeroIsClassicalLaplaceBudget) {
  const PrivacyParams p{{0.1, 0.5, 0.025}, {2.0, 1.0, 0.3}};
  const DenseVector dp = BudgetDp(p, Ring(3), 0);
  const DenseVector lppa = BudgetLppa(p, Ring(3), 0);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(dp[i], p.delta_f[i] / p.beta[i]);
    EXPECT_NEAR(lppa[i], p.delta_f[i] / (std::sqrt(2.0) * p.beta[i]),
                1e-12 * lppa[i]);
  }
}

TEST(BudgetTest, RatioIsSqrtTwoOnRandomInstances) {
  SeededRng rng(71, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.Index(10);
    const WeightMatrix w =
        SinkhornKnopp(testing::RandomStronglyConnected(n, rng));
    PrivacyParams p;
    for (std::size_t i = 0; i < n; ++i) {
      p.beta.push_back(rng.Uniform(0.01, 1.0));
      p.delta_f.push_back(rng.Uniform(0.1, 5.0));
    }
    const int t = static_cast<int>(rng.Index(26));
    const DenseVector dp = BudgetDp(p, w, t);
    const DenseVector lppa = BudgetLppa(p, w, t);
    for (std::size_t i = 0; i < n; ++i) {
      ASSERT_NEAR(dp[i] / lppa[i], std::sqrt(2.0), 1e-12);
    }
  }
}

TEST(BudgetTest, UniformBetaIsConstantInTime) {
  const WeightMatrix w = Ring(5);
  const PrivacyParams p{DenseVector(5, 0.1), {1, 2, 3, 4, 5}};
  for (int t = 0; t <= 25; ++t) {
    const DenseVector dp = BudgetDp(p, w, t);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(dp[i], p.delta_f[i] / 0.1, 1e-9);
    }
  }
}

TEST(BudgetTest, NonUniformBetaMatchesHandPower) {
  const WeightMatrix w = Ring(3);
  const PrivacyParams p{{0.025, 0.1, 0.5}, {1.0, 1.0, 1.0}};
  for (int t = 0; t <= 6; ++t) {
    const DenseVector scaled = PowerApply(w, p.beta, t);
    const DenseVector dp = BudgetDp(p, w, t);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_NEAR(dp[i], 1.0 / scaled[i], 1e-10 * dp[i]);
    }
  }
  // Client 0 has the smallest scale; mixing raises it, so its budget drops.
  EXPECT_LT(BudgetDp(p, w, 3)[0], BudgetDp(p, w, 0)[0]);
}

TEST(BudgetTest, RaisingAnyBetaNeverRaisesABudget) {
  SeededRng rng(5, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.Index(6);
    const WeightMatrix w =
        SinkhornKnopp(testing::RandomStronglyConnected(n, rng));
    PrivacyParams p{DenseVector(n), DenseVector(n, 1.0)};
    for (double& b : p.beta) b = rng.Uniform(0.01, 1.0);
    PrivacyParams q = p;
    q.beta[rng.Index(n)] *= 1.5;
    const int t = static_cast<int>(rng.Index(10));
    const DenseVector before = BudgetLppa(p, w, t);
    const DenseVector after = BudgetLppa(q, w, t);
    for (std::size_t i = 0; i < n; ++i) EXPECT_LE(after[i], before[i]);
  }
}

TEST(BudgetTest, ReportCoversEveryRound) {
  const PrivacyParams p{DenseVector(4, 0.2), DenseVector(4, 1.0)};
  const BudgetReport r = ComputeBudgetReport(p, Ring(4), 7);
  EXPECT_EQ(r.epsilon_lppa.size(), 8u);
  EXPECT_EQ(r.epsilon_dp.size(), 8u);
}

TEST(BudgetTest, RejectsBadInputs) {
  const WeightMatrix w = Ring(3);
  EXPECT_THROW(BudgetDp({{0.1, 0.1, 0.1}, {1, 1, 1}}, w, -1), Error);
  EXPECT_THROW(BudgetDp({{0.1, 0.0, 0.1}, {1, 1, 1}}, w, 0), Error);
  EXPECT_THROW(BudgetDp({{0.1, 0.1}, {1, 1}}, w, 0), Error);
  EXPECT_THROW(BudgetLppa({{0.1, 0.1, 0.1}, {1, -1, 1}}, w, 0), Error);
}

TEST(SensitivityTest, DuplicatedRowsGiveZero) {
  const ModelSpec spec{ModelKind::kLogReg, 3, 2, 0};
  Dataset d;
  d.features = DenseMatrix::FromRows(std::vector<DenseVector>(
      4, DenseVector{0.2, 0.4, 0.6}));
  d.labels = {1, 1, 1, 1};
  d.n_classes = 2;
  EXPECT_NEAR(EmpiricalSensitivity(spec, InitParams(spec, 1), d), 0.0, 1e-15);
}

TEST(SensitivityTest, TwoSamplesBruteForce) {
  const ModelSpec spec{ModelKind::kLogReg, 2, 2, 0};
  const Dataset d = GenerateSynthetic(2, 2, 2, 1.0, 3);
  const DenseVector theta = InitParams(spec, 2);
  const DenseVector both = GradWeights(spec, theta, FullBatch(d));
  const double drop0 =
      Norm1(Sub(both, GradWeights(spec, theta, MakeBatch(d, {1}))));
  const double drop1 =
      Norm1(Sub(both, GradWeights(spec, theta, MakeBatch(d, {0}))));
  EXPECT_NEAR(EmpiricalSensitivity(spec, theta, d), std::max(drop0, drop1),
              1e-15);
}

TEST(SensitivityTest, NonNegativeAndNeedsTwoSamples) {
  const ModelSpec spec{ModelKind::kMlp, 3, 3, 4};
  const Dataset d = GenerateSynthetic(3, 3, 30, 2.0, 0);
  EXPECT_GE(EmpiricalSensitivity(spec, InitParams(spec, 0), d), 0.0);
  try {
    EmpiricalSensitivity(spec, InitParams(spec, 0), d.Subset(
        std::vector<std::size_t>{0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSensitivity);
  }
}

// On a directed ring at round 0 every client sends one and receives one
// Laplace(beta) vector, so each coordinate of its perturbation has variance
// 4 beta^2, the variance of a Laplace variable with scale sqrt(2) beta.
TEST(SensitivityTest, RingPerturbationScaleMatchesBudgetScale) {
  const std::size_t n = 5, p = 20000;
  const double beta = 0.3;
  const Digraph g = BuildTopology(TopologyKind::kRing, n);
  const NoiseLedger ledger = ExchangeNoise(g, beta, p, 8);
  const DenseMatrix pert = testing::SentMinusReceived(ledger, g);
  const double scale = std::sqrt(2.0) * beta;
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (double v : pert.row(i)) ss += v * v;
    EXPECT_NEAR(ss / p / (2 * scale * scale), 1.0, 0.05) << "client " << i;
  }
}

}  // namespace
}  // namespace dflsim
