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

#ifndef DFLSIM_DATA_H_
#define DFLSIM_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dflsim/numerics.h"

namespace dflsim {

struct Dataset {
  DenseMatrix features;     // n_samples x dim
  std::vector<int> labels;  // each in [0, n_classes)
  int n_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  // Rows at `indices`, in that order.
  Dataset Subset(std::span<const std::size_t> indices) const;
  // Throws a parameter error if any structural invariant is broken.
  void Validate() const;

  bool operator==(const Dataset&) const = default;
};

// Gaussian class blobs with unit covariance. Class c is centered at
// separation * u_c, where u_c is the c-th basis vector when
// n_classes <= dim and a seeded random unit direction otherwise. Label of
// sample s is s mod n_classes.
Dataset GenerateSynthetic(int n_classes, std::size_t dim,
                          std::size_t n_samples, double separation,
                          std::uint64_t seed);

// Per-column min-max scaling into [0, 1]; constant columns map to 0.
Dataset MinMaxNormalize(const Dataset& d);

// Header row required. Every non-label column must be numeric; the label
// column must hold non-negative integers. Features are min-max normalized.
Dataset LoadCsv(const std::filesystem::path& path,
                const std::string& label_column);

// Writes features as f0..f{dim-1} followed by `label_column`, 17
// significant digits.
void WriteCsv(const Dataset& d, const std::filesystem::path& path,
              const std::string& label_column = "label");

// Random disjoint split; returns (train, test).
std::pair<Dataset, Dataset> TrainTestSplit(const Dataset& d,
                                           double test_fraction,
                                           std::uint64_t seed);

enum class PartitionKind {
  kIid,
  kQuantitySkew,
  kLabelSkewDirichlet,
  kLabelSkewCount,
};

inline constexpr double kDefaultDirichletAlpha = 0.1;
inline constexpr int kPartitionAttempts = 100;

struct PartitionSpec {
  PartitionKind kind = PartitionKind::kIid;
  double alpha = kDefaultDirichletAlpha;  // Dirichlet variants
  int k = 2;                              // label_skew_count
  std::uint64_t seed = 0;

  void Validate(int n_classes) const;
};

// Index sets into `d`, one per client. Every client receives at least one
// sample; random schemes retry up to kPartitionAttempts times.
std::vector<std::vector<std::size_t>> PartitionIndices(
    const Dataset& d, const PartitionSpec& spec, std::size_t n_clients);

std::vector<Dataset> Partition(const Dataset& d, const PartitionSpec& spec,
                               std::size_t n_clients);

}  // namespace dflsim

#endif  // DFLSIM_DATA_H_
