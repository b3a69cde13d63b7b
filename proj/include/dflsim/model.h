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

#ifndef DFLSIM_MODEL_H_
#define DFLSIM_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dflsim/data.h"
#include "dflsim/numerics.h"

namespace dflsim {

enum class ModelKind { kLogReg, kMlp };

// Parameter layout (flat, row-major):
//   logreg: W [n_classes x dim], b [n_classes]
//   mlp:    W1 [hidden x dim], b1 [hidden], W2 [n_classes x hidden],
//           b2 [n_classes]; hidden activation is tanh.
struct ModelSpec {
  ModelKind kind = ModelKind::kLogReg;
  std::size_t dim = 1;
  std::size_t n_classes = 2;
  std::size_t hidden = 0;  // mlp only

  std::size_t ParamCount() const;
  void Validate() const;
};

struct Batch {
  DenseMatrix features;
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // rows of the owning shard

  std::size_t size() const { return labels.size(); }
};

Batch MakeBatch(const Dataset& shard, std::vector<std::size_t> indices);
Batch FullBatch(const Dataset& shard);

// Glorot-uniform weights, zero biases.
// `stream` selects an independent draw for the same seed (one per client).
DenseVector InitParams(const ModelSpec& spec, std::uint64_t seed,
                       std::uint64_t stream = 0);

// Mean softmax cross-entropy. Throws a numeric error on non-finite output.
double ForwardLoss(const ModelSpec& spec, std::span<const double> theta,
                   const Batch& batch);
// Gradient of ForwardLoss w.r.t. theta, same layout as theta.
DenseVector GradWeights(const ModelSpec& spec, std::span<const double> theta,
                        const Batch& batch);
// Gradient of ForwardLoss w.r.t. each input row; n_samples x dim.
DenseMatrix GradInputs(const ModelSpec& spec, std::span<const double> theta,
                       const DenseMatrix& features,
                       std::span<const int> labels);

// Soft-target variants: `targets` is n_samples x n_classes, each row a
// probability distribution. Hard labels are the one-hot special case.
double ForwardLossSoft(const ModelSpec& spec, std::span<const double> theta,
                       const DenseMatrix& features, const DenseMatrix& targets);
DenseVector GradWeightsSoft(const ModelSpec& spec,
                            std::span<const double> theta,
                            const DenseMatrix& features,
                            const DenseMatrix& targets);

// Class logits for one input row.
DenseVector Logits(const ModelSpec& spec, std::span<const double> theta,
                   std::span<const double> x);
// Max-subtracted softmax.
DenseVector Softmax(std::span<const double> logits);

// Fraction of rows whose argmax logit (lowest index on ties) equals the
// label.
double Accuracy(const ModelSpec& spec, std::span<const double> theta,
                const Dataset& d);

DenseMatrix OneHot(std::span<const int> labels, std::size_t n_classes);

}  // namespace dflsim

#endif  // DFLSIM_MODEL_H_
