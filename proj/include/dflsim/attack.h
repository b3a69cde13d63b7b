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

#ifndef DFLSIM_ATTACK_H_
#define DFLSIM_ATTACK_H_

#include <cstddef>
#include <cstdint>
#include <span>

#include "dflsim/model.h"
#include "dflsim/numerics.h"

namespace dflsim {

struct AttackConfig {
  int iterations = 300;
  double step_size = 1.0;
  int restarts = 5;
  int target_round = 0;
  std::uint64_t init_seed = 0;
  // Backtracking budget per iteration; an iteration with no decrease after
  // this many halvings ends the restart.
  int max_halvings = 40;
  // Central-difference step for the mlp objective gradient.
  double fd_step = 1e-6;

  void Validate() const;
};

struct BatchShape {
  std::size_t n_samples = 1;
  std::size_t dim = 1;
};

struct ReconstructionResult {
  DenseMatrix x_hat;
  DenseMatrix y_hat;  // softmax of reconstructed label logits
  double mse = 0.0;
  double objective = 0.0;            // final ||g - gamma||^2
  double grad_match_residual = 0.0;  // final ||g - gamma||_2
  int iterations_used = 0;
  int best_restart = 0;
  int aborted_restarts = 0;
};

// J = ||grad_theta CE(x_hat, softmax(label_logits)) - received||_2^2
double DlgObjective(const ModelSpec& spec, std::span<const double> theta,
                    std::span<const double> received, const DenseMatrix& x_hat,
                    const DenseMatrix& label_logits);

// dJ/dx_hat and dJ/dlabel_logits. Closed form for logreg; central
// differences with step `fd_step` for mlp.
void DlgObjectiveGradient(const ModelSpec& spec, std::span<const double> theta,
                          std::span<const double> received,
                          const DenseMatrix& x_hat,
                          const DenseMatrix& label_logits, double fd_step,
                          DenseMatrix& grad_x, DenseMatrix& grad_logits);

// Gradient-matching reconstruction of the batch behind `received_gamma`.
// Each restart starts from uniform(0, 1) features and N(0, 1) label logits
// and descends J with step halving on non-decrease. The restart with the
// lowest final J wins (ties: lowest index). `true_features` only feeds the
// reported MSE.
ReconstructionResult DlgAttack(const ModelSpec& spec,
                               std::span<const double> victim_theta,
                               std::span<const double> received_gamma,
                               const BatchShape& shape,
                               const DenseMatrix& true_features,
                               const AttackConfig& cfg);

// Mean squared entrywise difference; no re-alignment of rows.
double Mse(const DenseMatrix& x_hat, const DenseMatrix& x_true);

}  // namespace dflsim

#endif  // DFLSIM_ATTACK_H_
