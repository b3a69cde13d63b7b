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
#include <numeric>

#include "dflsim/data.h"
#include "dflsim/error.h"
#include "dflsim/model.h"
#include "dflsim/numerics.h"

namespace dflsim {
namespace {

constexpr double kFdStep = 1e-6;
constexpr double kGradTol = 1e-5;

struct Instance {
  ModelSpec spec;
  DenseVector theta;
  Batch batch;
};

// Random spec, weights of moderate size, and a random batch with random
// labels. All draws come from `rng`.
Instance RandomInstance(ModelKind kind, SeededRng& rng) {
  Instance in;
  in.spec.kind = kind;
  in.spec.dim = 1 + rng.Index(6);
  in.spec.n_classes = 2 + rng.Index(4);
  in.spec.hidden = kind == ModelKind::kMlp ? 1 + rng.Index(6) : 0;
  in.theta.resize(in.spec.ParamCount());
  for (double& v : in.theta) v = rng.Uniform(-1.5, 1.5);
  const std::size_t n = 1 + rng.Index(8);
  in.batch.features = DenseMatrix(n, in.spec.dim);
  for (double& v : in.batch.features.data()) v = rng.Uniform(-2.0, 2.0);
  for (std::size_t s = 0; s < n; ++s) {
    in.batch.labels.push_back(static_cast<int>(rng.Index(in.spec.n_classes)));
    in.batch.indices.push_back(s);
  }
  return in;
}

class GradientOracleTest : public ::testing::TestWithParam<ModelKind> {};

TEST_P(GradientOracleTest, WeightGradientMatchesCentralDifference) {
  SeededRng rng(100 + static_cast<int>(GetParam()), 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = RandomInstance(GetParam(), rng);
    const DenseVector analytic = GradWeights(in.spec, in.theta, in.batch);
    const DenseVector numeric = FiniteDiffGradient(
        [&](const DenseVector& t) { return ForwardLoss(in.spec, t, in.batch); },
        in.theta, kFdStep);
    ASSERT_LE(RelativeError(analytic, numeric), kGradTol) << "trial " << trial;
  }
}

TEST_P(GradientOracleTest, InputGradientMatchesCentralDifference) {
  SeededRng rng(200 + static_cast<int>(GetParam()), 0);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = RandomInstance(GetParam(), rng);
    const DenseMatrix analytic = GradInputs(in.spec, in.theta,
                                            in.batch.features,
                                            in.batch.labels);
    const DenseVector numeric = FiniteDiffGradient(
        [&](const DenseVector& x) {
          Batch b = in.batch;
          b.features.data() = x;
          return ForwardLoss(in.spec, in.theta, b);
        },
        in.batch.features.data(), kFdStep);
    ASSERT_LE(RelativeError(analytic.data(), numeric), kGradTol)
        << "trial " << trial;
  }
}

TEST_P(GradientOracleTest, SoftTargetGradientMatchesCentralDifference) {
  SeededRng rng(300 + static_cast<int>(GetParam()), 0);
  for (int trial = 0; trial < 30; ++trial) {
    const Instance in = RandomInstance(GetParam(), rng);
    DenseMatrix targets(in.batch.size(), in.spec.n_classes);
    for (std::size_t s = 0; s < targets.rows(); ++s) {
      const DenseVector p = SampleDirichlet(in.spec.n_classes, 1.0, rng);
      std::copy(p.begin(), p.end(), targets.row(s).begin());
    }
    const DenseVector analytic =
        GradWeightsSoft(in.spec, in.theta, in.batch.features, targets);
    const DenseVector numeric = FiniteDiffGradient(
        [&](const DenseVector& t) {
          return ForwardLossSoft(in.spec, t, in.batch.features, targets);
        },
        in.theta, kFdStep);
    ASSERT_LE(RelativeError(analytic, numeric), kGradTol) << "trial " << trial;
  }
}

TEST_P(GradientOracleTest, OneHotSoftTargetsMatchHardLabels) {
  SeededRng rng(400 + static_cast<int>(GetParam()), 0);
  const Instance in = RandomInstance(GetParam(), rng);
  const DenseMatrix onehot = OneHot(in.batch.labels, in.spec.n_classes);
  EXPECT_DOUBLE_EQ(
      ForwardLossSoft(in.spec, in.theta, in.batch.features, onehot),
      ForwardLoss(in.spec, in.theta, in.batch));
  EXPECT_LE(RelativeError(GradWeightsSoft(in.spec, in.theta,
                                          in.batch.features, onehot),
                          GradWeights(in.spec, in.theta, in.batch)),
            1e-14);
}

TEST_P(GradientOracleTest, BatchGradientIsSizeWeightedMean) {
  SeededRng rng(500 + static_cast<int>(GetParam()), 0);
  const Dataset d = GenerateSynthetic(3, 4, 30, 1.0, 6);
  ModelSpec spec{GetParam(), 4, 3, GetParam() == ModelKind::kMlp ? 5u : 0u};
  const DenseVector theta = InitParams(spec, 3);
  std::vector<std::size_t> a(12), b(18);
  std::iota(a.begin(), a.end(), std::size_t{0});
  std::iota(b.begin(), b.end(), std::size_t{12});
  const DenseVector ga = GradWeights(spec, theta, MakeBatch(d, a));
  const DenseVector gb = GradWeights(spec, theta, MakeBatch(d, b));
  const DenseVector gab = GradWeights(spec, theta, FullBatch(d));
  DenseVector expected(ga.size());
  for (std::size_t k = 0; k < ga.size(); ++k) {
    expected[k] = (12 * ga[k] + 18 * gb[k]) / 30;
  }
  EXPECT_LE(RelativeError(gab, expected), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Kinds, GradientOracleTest,
                         ::testing::Values(ModelKind::kLogReg,
                                           ModelKind::kMlp),
                         [](const auto& info) {
                           return info.param == ModelKind::kLogReg ? "LogReg"
                                                                   : "Mlp";
                         });

TEST(ModelSpecTest, ParameterCounts) {
  EXPECT_EQ((ModelSpec{ModelKind::kLogReg, 2, 2, 0}).ParamCount(), 6u);
  EXPECT_EQ((ModelSpec{ModelKind::kMlp, 3, 2, 4}).ParamCount(), 26u);
  EXPECT_THROW((ModelSpec{ModelKind::kMlp, 3, 2, 0}).Validate(), Error);
  EXPECT_THROW((ModelSpec{ModelKind::kLogReg, 0, 2, 0}).Validate(), Error);
  EXPECT_NO_THROW((ModelSpec{ModelKind::kLogReg, 3, 1, 0}).Validate());
}

TEST(InitParamsTest, DeterministicPerStream) {
  const ModelSpec spec{ModelKind::kMlp, 3, 2, 4};
  EXPECT_EQ(InitParams(spec, 5), InitParams(spec, 5));
  EXPECT_NE(InitParams(spec, 5, 0), InitParams(spec, 5, 1));
  const DenseVector theta = InitParams(spec, 5);
  // Biases start at zero: b1 sits after W1, b2 at the end.
  for (std::size_t k = 12; k < 16; ++k) EXPECT_EQ(theta[k], 0.0);
  for (std::size_t k = 24; k < 26; ++k) EXPECT_EQ(theta[k], 0.0);
}

TEST(LossTest, ZeroWeightsGiveLogClassCount) {
  for (std::size_t k : {2u, 3u, 7u}) {
    const ModelSpec spec{ModelKind::kLogReg, 4, k, 0};
    const Dataset d = GenerateSynthetic(static_cast<int>(k), 4, 21, 1.0, 0);
    const DenseVector theta(spec.ParamCount(), 0.0);
    EXPECT_NEAR(ForwardLoss(spec, theta, FullBatch(d)), std::log(double(k)),
                1e-12);
  }
}

TEST(LossTest, SingleSampleIsNegativeLogProbability) {
  const ModelSpec spec{ModelKind::kLogReg, 2, 3, 0};
  const DenseVector theta = {0.2, -0.1, 0.5, 0.3, -0.4, 0.0, 0.1, 0.2, -0.3};
  Batch b;
  b.features = DenseMatrix::FromRows(std::vector<DenseVector>{{1.0, 2.0}});
  b.labels = {1};
  b.indices = {0};
  const DenseVector p = Softmax(Logits(spec, theta, b.features.row(0)));
  EXPECT_NEAR(ForwardLoss(spec, theta, b), -std::log(p[1]), 1e-14);
  // Logits by hand: W x + b.
  EXPECT_NEAR(Logits(spec, theta, b.features.row(0))[2],
              -0.4 * 1 + 0.0 * 2 - 0.3, 1e-15);
}

TEST(LossTest, SmallStepDecreasesLossOnLogReg) {
  SeededRng rng(7, 7);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = RandomInstance(ModelKind::kLogReg, rng);
    const DenseVector g = GradWeights(in.spec, in.theta, in.batch);
    const double before = ForwardLoss(in.spec, in.theta, in.batch);
    for (double step : {1e-2, 1e-3, 1e-4}) {
      DenseVector t = in.theta;
      Axpy(-step, g, t);
      EXPECT_LE(ForwardLoss(in.spec, t, in.batch), before) << trial;
    }
  }
}

TEST(LossTest, NonFiniteParametersRaiseNumericError) {
  const ModelSpec spec{ModelKind::kLogReg, 2, 2, 0};
  DenseVector theta(6, 0.0);
  theta[0] = NAN;
  const Dataset d = GenerateSynthetic(2, 2, 4, 1.0, 0);
  try {
    ForwardLoss(spec, theta, FullBatch(d));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumeric);
  }
}

TEST(GradientTest, ZeroAtSymmetricStationaryPoint) {
  // Same input under both labels with zero weights: probabilities are 1/2
  // and the two residuals cancel.
  const ModelSpec spec{ModelKind::kLogReg, 3, 2, 0};
  Batch b;
  b.features = DenseMatrix::FromRows(
      std::vector<DenseVector>{{1, -2, 0.5}, {1, -2, 0.5}});
  b.labels = {0, 1};
  b.indices = {0, 1};
  for (double v : GradWeights(spec, DenseVector(8, 0.0), b)) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(GradientTest, LogRegInputGradientClosedForm) {
  // dL/dx_s = W^T (p_s - e_{y_s}) / n, with W scaled by c.
  const ModelSpec spec{ModelKind::kLogReg, 3, 2, 0};
  const DenseVector base = {0.4, -0.2, 0.1, -0.3, 0.5, 0.2, 0.05, -0.05};
  const DenseMatrix x = DenseMatrix::FromRows(
      std::vector<DenseVector>{{0.3, 0.6, -0.9}, {1.0, 0.0, 0.2}});
  const std::vector<int> y = {1, 0};
  for (double c : {0.0, 0.5, 1.0, 3.0}) {
    DenseVector theta = base;
    for (std::size_t k = 0; k < 6; ++k) theta[k] *= c;
    const DenseMatrix g = GradInputs(spec, theta, x, y);
    for (std::size_t s = 0; s < 2; ++s) {
      const DenseVector p = Softmax(Logits(spec, theta, x.row(s)));
      for (std::size_t j = 0; j < 3; ++j) {
        double expected = 0.0;
        for (std::size_t k = 0; k < 2; ++k) {
          expected += theta[k * 3 + j] * (p[k] - (y[s] == int(k) ? 1.0 : 0.0));
        }
        EXPECT_NEAR(g(s, j), expected / 2.0, 1e-15);
      }
    }
  }
}

TEST(AccuracyTest, ZeroWeightsOnBalancedBinaryIsHalf) {
  const ModelSpec spec{ModelKind::kLogReg, 2, 2, 0};
  const Dataset d = GenerateSynthetic(2, 2, 100, 4.0, 1);
  EXPECT_EQ(Accuracy(spec, DenseVector(6, 0.0), d), 0.5);
}

TEST(AccuracyTest, InvariantToCommonBiasShift) {
  const ModelSpec spec{ModelKind::kLogReg, 4, 3, 0};
  const Dataset d = GenerateSynthetic(3, 4, 90, 2.0, 2);
  DenseVector theta = InitParams(spec, 2);
  const double before = Accuracy(spec, theta, d);
  for (std::size_t k = 12; k < 15; ++k) theta[k] += 0.75;
  EXPECT_EQ(Accuracy(spec, theta, d), before);
}

TEST(AccuracyTest, TrainedSeparatorReachesOne) {
  const ModelSpec spec{ModelKind::kMlp, 2, 2, 6};
  const Dataset d = GenerateSynthetic(2, 2, 60, 8.0, 3);
  DenseVector theta = InitParams(spec, 1);
  for (int it = 0; it < 2000; ++it) {
    Axpy(-0.3, GradWeights(spec, theta, FullBatch(d)), theta);
  }
  EXPECT_EQ(Accuracy(spec, theta, d), 1.0);
}

TEST(SoftmaxTest, StableForLargeLogits) {
  const DenseVector p = Softmax(DenseVector{1000.0, 1000.0, -1000.0});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
  EXPECT_EQ(p[2], 0.0);
}

}  // namespace
}  // namespace dflsim
