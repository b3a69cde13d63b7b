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

#ifndef DFLSIM_PRIVACY_H_
#define DFLSIM_PRIVACY_H_

#include <cstddef>
#include <vector>

#include "dflsim/data.h"
#include "dflsim/model.h"
#include "dflsim/numerics.h"
#include "dflsim/topology.h"

namespace dflsim {

// Per-client Laplace scales and L1 sensitivities.
struct PrivacyParams {
  DenseVector beta;
  DenseVector delta_f;

  void Validate(std::size_t n_clients) const;
};

// Privacy budget of noise-difference injection at round t:
//   epsilon_i = delta_f_i / (sqrt(2) * (W^t beta)_i)
DenseVector BudgetLppa(const PrivacyParams& params, const WeightMatrix& w,
                       int t);
// Privacy budget of independent Laplace noise at round t:
//   epsilon_i = delta_f_i / (W^t beta)_i
DenseVector BudgetDp(const PrivacyParams& params, const WeightMatrix& w,
                     int t);

struct BudgetReport {
  std::vector<DenseVector> epsilon_lppa;  // indexed by round 0..t_max
  std::vector<DenseVector> epsilon_dp;
};

BudgetReport ComputeBudgetReport(const PrivacyParams& params,
                                 const WeightMatrix& w, int t_max);

// Leave-one-out L1 sensitivity of the full-shard gradient at theta:
//   max_s || grad(D) - grad(D \ {s}) ||_1
// Needs at least two samples.
double EmpiricalSensitivity(const ModelSpec& spec,
                            std::span<const double> theta, const Dataset& shard);

}  // namespace dflsim

#endif  // DFLSIM_PRIVACY_H_
