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

#include "dflsim/data.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dflsim/error.h"

namespace dflsim {
namespace {

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string Trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Largest-remainder apportionment of `total` items by `proportions`.
std::vector<std::size_t> Apportion(const DenseVector& proportions,
                                   std::size_t total) {
  const std::size_t k = proportions.size();
  std::vector<std::size_t> sizes(k);
  std::vector<std::pair<double, std::size_t>> remainders(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = proportions[i] * static_cast<double>(total);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += sizes[i];
    remainders[i] = {exact - static_cast<double>(sizes[i]), i};
  }
  // Ties broken by lower index for determinism.
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              return a.first != b.first ? a.first > b.first
                                        : a.second < b.second;
            });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) {
    ++sizes[remainders[r % k].second];
  }
  return sizes;
}

std::vector<std::size_t> EvenSizes(std::size_t total, std::size_t parts) {
  std::vector<std::size_t> sizes(parts, total / parts);
  for (std::size_t i = 0; i < total % parts; ++i) ++sizes[i];
  return sizes;
}

void Distribute(const std::vector<std::size_t>& items,
                const std::vector<std::size_t>& sizes,
                const std::vector<std::size_t>& owners,
                std::vector<std::vector<std::size_t>>& shards) {
  std::size_t cursor = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    for (std::size_t s = 0; s < sizes[p]; ++s) {
      shards[owners[p]].push_back(items[cursor++]);
    }
  }
}

bool AnyEmpty(const std::vector<std::vector<std::size_t>>& shards) {
  return std::any_of(shards.begin(), shards.end(),
                     [](const auto& s) { return s.empty(); });
}

std::vector<std::vector<std::size_t>> ClassIndices(const Dataset& d) {
  std::vector<std::vector<std::size_t>> by_class(d.n_classes);
  for (std::size_t s = 0; s < d.size(); ++s) by_class[d.labels[s]].push_back(s);
  return by_class;
}

std::vector<std::size_t> Iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

Dataset Dataset::Subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.n_classes = n_classes;
  out.features = DenseMatrix(indices.size(), dim());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) {
      throw Error(ErrorCode::kParameter, "subset index out of range");
    }
    const auto src = features.row(indices[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

void Dataset::Validate() const {
  if (size() == 0) throw Error(ErrorCode::kParameter, "dataset is empty");
  if (features.rows() != labels.size()) {
    throw Error(ErrorCode::kParameter, "feature/label row count mismatch");
  }
  for (int y : labels) {
    if (y < 0 || y >= n_classes) {
      throw Error(ErrorCode::kParameter,
                  "label " + std::to_string(y) + " outside [0, " +
                      std::to_string(n_classes) + ")");
    }
  }
  if (!AllFinite(features.data())) {
    throw Error(ErrorCode::kNumeric, "non-finite feature value");
  }
}

Dataset GenerateSynthetic(int n_classes, std::size_t dim,
                          std::size_t n_samples, double separation,
                          std::uint64_t seed) {
  if (n_classes < 2 || dim < 1 ||
      n_samples < static_cast<std::size_t>(n_classes)) {
    throw Error(ErrorCode::kParameter,
                "synthetic data needs n_classes >= 2, dim >= 1, "
                "n_samples >= n_classes");
  }
  if (!std::isfinite(separation)) {
    throw Error(ErrorCode::kParameter, "separation must be finite");
  }
  DenseMatrix centers(n_classes, dim);
  if (static_cast<std::size_t>(n_classes) <= dim) {
    for (int c = 0; c < n_classes; ++c) centers(c, c) = separation;
  } else {
    SeededRng rng(seed, StreamId(StreamPurpose::kSynthetic, 0));
    for (int c = 0; c < n_classes; ++c) {
      auto row = centers.row(c);
      for (auto& v : row) v = rng.Normal();
      const double norm = Norm2(row);
      for (auto& v : row) v *= separation / norm;
    }
  }

  Dataset d;
  d.n_classes = n_classes;
  d.features = DenseMatrix(n_samples, dim);
  d.labels.resize(n_samples);
  SeededRng rng(seed, StreamId(StreamPurpose::kSynthetic, 1));
  for (std::size_t s = 0; s < n_samples; ++s) {
    const int c = static_cast<int>(s % static_cast<std::size_t>(n_classes));
    d.labels[s] = c;
    for (std::size_t j = 0; j < dim; ++j) {
      d.features(s, j) = centers(c, j) + rng.Normal();
    }
  }
  return d;
}

Dataset MinMaxNormalize(const Dataset& d) {
  Dataset out = d;
  for (std::size_t j = 0; j < d.dim(); ++j) {
    double lo = d.features(0, j);
    double hi = lo;
    for (std::size_t s = 1; s < d.size(); ++s) {
      lo = std::min(lo, d.features(s, j));
      hi = std::max(hi, d.features(s, j));
    }
    const double range = hi - lo;
    for (std::size_t s = 0; s < d.size(); ++s) {
      out.features(s, j) = range > 0.0 ? (d.features(s, j) - lo) / range : 0.0;
    }
  }
  return out;
}

Dataset LoadCsv(const std::filesystem::path& path,
                const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kIngestion, path.string() + ": missing header row");
  }
  std::vector<std::string> header = SplitCsvLine(line);
  for (auto& h : header) h = Trim(h);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw Error(ErrorCode::kIngestion,
                path.string() + ": missing label column '" + label_column + "'");
  }
  const std::size_t label_col = label_it - header.begin();
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (Trim(line).empty()) continue;
    const std::vector<std::string> cells = SplitCsvLine(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kIngestion,
                  "row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = Trim(cells[c]);
      const char* first = cell.data();
      const char* last = cell.data() + cell.size();
      if (c == label_col) {
        int y = 0;
        const auto [ptr, ec] = std::from_chars(first, last, y);
        if (ec != std::errc() || ptr != last || y < 0) {
          throw Error(ErrorCode::kIngestion,
                      "row " + std::to_string(row) +
                          ": label is not a non-negative integer: '" + cell +
                          "'");
        }
        labels.push_back(y);
      } else {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
          throw Error(ErrorCode::kIngestion,
                      "row " + std::to_string(row) + ", column '" + header[c] +
                          "': non-numeric cell '" + cell + "'");
        }
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) {
    throw Error(ErrorCode::kIngestion, path.string() + ": no data rows");
  }
  Dataset d;
  d.features = DenseMatrix(labels.size(), dim);
  d.features.data() = std::move(values);
  d.labels = std::move(labels);
  d.n_classes = *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  if (d.n_classes < 2) d.n_classes = 2;
  return MinMaxNormalize(d);
}

void WriteCsv(const Dataset& d, const std::filesystem::path& path,
              const std::string& label_column) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  for (std::size_t j = 0; j < d.dim(); ++j) out << 'f' << j << ',';
  out << label_column << '\n';
  char buf[32];
  for (std::size_t s = 0; s < d.size(); ++s) {
    for (std::size_t j = 0; j < d.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", d.features(s, j));
      out << buf << ',';
    }
    out << d.labels[s] << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::pair<Dataset, Dataset> TrainTestSplit(const Dataset& d,
                                           double test_fraction,
                                           std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kParameter, "test_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order = Iota(d.size());
  SeededRng rng(seed, StreamId(StreamPurpose::kTestData));
  Shuffle(order, rng);
  const auto n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(d.size())));
  if (n_test == 0 || n_test >= d.size()) {
    throw Error(ErrorCode::kParameter, "train/test split leaves a side empty");
  }
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {d.Subset(train), d.Subset(test)};
}

void PartitionSpec::Validate(int n_classes) const {
  switch (kind) {
    case PartitionKind::kIid:
      break;
    case PartitionKind::kQuantitySkew:
    case PartitionKind::kLabelSkewDirichlet:
      if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw Error(ErrorCode::kParameter, "Dirichlet alpha must be > 0");
      }
      break;
    case PartitionKind::kLabelSkewCount:
      if (k < 1 || k > n_classes) {
        throw Error(ErrorCode::kParameter,
                    "label_skew_count needs 1 <= k <= n_classes");
      }
      break;
  }
}

std::vector<std::vector<std::size_t>> PartitionIndices(
    const Dataset& d, const PartitionSpec& spec, std::size_t n_clients) {
  if (n_clients < 2) {
    throw Error(ErrorCode::kParameter, "partition needs n_clients >= 2");
  }
  spec.Validate(d.n_classes);
  if (d.size() < n_clients) {
    throw Error(ErrorCode::kPartition,
                "fewer samples than clients: " + std::to_string(d.size()));
  }
  const std::vector<std::size_t> all_clients = Iota(n_clients);

  for (int attempt = 0; attempt < kPartitionAttempts; ++attempt) {
    SeededRng rng(spec.seed, StreamId(StreamPurpose::kPartition,
                                      static_cast<std::uint64_t>(attempt)));
    std::vector<std::vector<std::size_t>> shards(n_clients);
    switch (spec.kind) {
      case PartitionKind::kIid: {
        std::vector<std::size_t> order = Iota(d.size());
        Shuffle(order, rng);
        Distribute(order, EvenSizes(d.size(), n_clients), all_clients, shards);
        break;
      }
      case PartitionKind::kQuantitySkew: {
        std::vector<std::size_t> order = Iota(d.size());
        Shuffle(order, rng);
        const DenseVector p = SampleDirichlet(n_clients, spec.alpha, rng);
        Distribute(order, Apportion(p, d.size()), all_clients, shards);
        break;
      }
      case PartitionKind::kLabelSkewDirichlet: {
        for (auto& members : ClassIndices(d)) {
          Shuffle(members, rng);
          const DenseVector p = SampleDirichlet(n_clients, spec.alpha, rng);
          Distribute(members, Apportion(p, members.size()), all_clients,
                     shards);
        }
        break;
      }
      case PartitionKind::kLabelSkewCount: {
        const auto classes = static_cast<std::size_t>(d.n_classes);
        const std::size_t k = std::min<std::size_t>(spec.k, classes);
        if (n_clients * k < classes) {
          throw Error(ErrorCode::kPartition,
                      "label_skew_count: n_clients * k < n_classes leaves "
                      "classes without a holder");
        }
        std::vector<std::vector<std::size_t>> holders(classes);
        for (std::size_t i = 0; i < n_clients; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            holders[(i * k + j) % classes].push_back(i);
          }
        }
        auto by_class = ClassIndices(d);
        for (std::size_t c = 0; c < classes; ++c) {
          Shuffle(by_class[c], rng);
          Distribute(by_class[c], EvenSizes(by_class[c].size(),
                                            holders[c].size()),
                     holders[c], shards);
        }
        break;
      }
    }
    if (AnyEmpty(shards)) continue;
    for (auto& s : shards) std::sort(s.begin(), s.end());
    return shards;
  }
  throw Error(ErrorCode::kPartition,
              "some client stayed empty after " +
                  std::to_string(kPartitionAttempts) + " attempts");
}

std::vector<Dataset> Partition(const Dataset& d, const PartitionSpec& spec,
                               std::size_t n_clients) {
  std::vector<Dataset> out;
  for (const auto& indices : PartitionIndices(d, spec, n_clients)) {
    out.push_back(d.Subset(indices));
  }
  return out;
}

}  // namespace dflsim
