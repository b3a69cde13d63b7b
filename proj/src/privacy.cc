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

#include "dflsim/privacy.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dflsim/error.h"

namespace dflsim {
namespace {

DenseVector DivideBy(const PrivacyParams& params, const WeightMatrix& w, int t,
                     double factor) {
  params.Validate(w.size());
  if (t < 0) throw Error(ErrorCode::kBudget, "round must be >= 0");
  const DenseVector mixed = MatVec(MatPow(w.w, t), params.beta);
  DenseVector eps(mixed.size());
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    const double denom = factor * mixed[i];
    if (!(denom > 0.0)) {
      throw Error(ErrorCode::kBudget, "zero noise scale reaches client " +
                                          std::to_string(i) + " at round " +
                                          std::to_string(t));
    }
    eps[i] = params.delta_f[i] / denom;
  }
  return eps;
}

}  // namespace

void PrivacyParams::Validate(std::size_t n_clients) const {
  if (beta.size() != n_clients || delta_f.size() != n_clients) {
    throw Error(ErrorCode::kParameter,
                "beta and delta_f need one entry per client");
  }
  for (std::size_t i = 0; i < n_clients; ++i) {
    if (!(beta[i] > 0.0) || !(delta_f[i] > 0.0) || !std::isfinite(beta[i]) ||
        !std::isfinite(delta_f[i])) {
      throw Error(ErrorCode::kParameter,
                  "beta and delta_f entries must be positive and finite");
    }
  }
}

DenseVector BudgetLppa(const PrivacyParams& params, const WeightMatrix& w,
                       int t) {
  return DivideBy(params, w, t, std::numbers::sqrt2);
}

DenseVector BudgetDp(const PrivacyParams& params, const WeightMatrix& w,
                     int t) {
  return DivideBy(params, w, t, 1.0);
}

BudgetReport ComputeBudgetReport(const PrivacyParams& params,
                                 const WeightMatrix& w, int t_max) {
  if (t_max < 0) throw Error(ErrorCode::kBudget, "t_max must be >= 0");
  BudgetReport report;
  for (int t = 0; t <= t_max; ++t) {
    report.epsilon_lppa.push_back(BudgetLppa(params, w, t));
    report.epsilon_dp.push_back(BudgetDp(params, w, t));
  }
  return report;
}

double EmpiricalSensitivity(const ModelSpec& spec,
                            std::span<const double> theta,
                            const Dataset& shard) {
  if (shard.size() < 2) {
    throw Error(ErrorCode::kSensitivity,
                "leave-one-out sensitivity needs at least two samples");
  }
  const DenseVector full = GradWeights(spec, theta, FullBatch(shard));
  double worst = 0.0;
  std::vector<std::size_t> rest;
  rest.reserve(shard.size() - 1);
  for (std::size_t s = 0; s < shard.size(); ++s) {
    rest.clear();
    for (std::size_t r = 0; r < shard.size(); ++r) {
      if (r != s) rest.push_back(r);
    }
    const DenseVector without = GradWeights(spec, theta, MakeBatch(shard, rest));
    worst = std::max(worst, Norm1(Sub(full, without)));
  }
  return worst;
}

}  // namespace dflsim
