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

#ifndef DFLSIM_NUMERICS_H_
#define DFLSIM_NUMERICS_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace dflsim {

using DenseVector = std::vector<double>;

// Row-major dense matrix of doubles. Used for W, its powers, and
// client-indexed stacks of parameter vectors (one row per client).
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static DenseMatrix Identity(std::size_t n);
  // Stacks equal-length vectors as rows.
  static DenseMatrix FromRows(std::span<const DenseVector> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Purposes for which independent random streams are derived. Adding a
// purpose never shifts the streams of existing ones.
enum class StreamPurpose : std::uint64_t {
  kInitParams = 1,
  kBatch = 2,
  kEdgeNoise = 3,
  kDpNoise = 4,
  kPartition = 5,
  kSynthetic = 6,
  kAttack = 7,
  kTestData = 8,
  kGeneric = 9,
};

// Maps (purpose, a, b) to a 64-bit stream id by SplitMix64 mixing.
std::uint64_t StreamId(StreamPurpose purpose, std::uint64_t a = 0,
                       std::uint64_t b = 0);

// Deterministic generator for one (seed, stream-id) pair. The engine is
// mt19937_64 (bit-exact by the standard) and all variates are derived from
// its raw 64-bit output here, never through <random> distributions whose
// algorithms are implementation-defined.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  std::uint64_t NextU64() { return engine_(); }
  // Uniform on the open interval (0, 1).
  double UniformOpen();
  // Uniform on [lo, hi).
  double Uniform(double lo, double hi);
  double Normal();
  // Marsaglia-Tsang; shape > 0, unit scale.
  double Gamma(double shape);
  // Uniform integer in [0, n).
  std::size_t Index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

// Fisher-Yates using SeededRng::Index.
void Shuffle(std::vector<std::size_t>& items, SeededRng& rng);

// Symmetric Dirichlet(alpha) draw of length k via normalized gammas.
DenseVector SampleDirichlet(std::size_t k, double alpha, SeededRng& rng);

struct LaplaceSpec {
  double scale = 0.0;  // beta; location is always 0
};

// Inverse CDF of Laplace(0, scale) evaluated at u in (-1/2, 1/2).
double LaplaceFromUniform(double u, double scale);
double LaplaceSample(SeededRng& rng, const LaplaceSpec& spec);
// Consumes exactly `dim` uniform draws.
DenseVector LaplaceVector(SeededRng& rng, std::size_t dim,
                          const LaplaceSpec& spec);

DenseMatrix MatMul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix MatPow(const DenseMatrix& w, int t);
DenseVector MatVec(const DenseMatrix& a, std::span<const double> x);
DenseMatrix Transpose(const DenseMatrix& a);
DenseMatrix Subtract(const DenseMatrix& a, const DenseMatrix& b);
double MaxAbs(const DenseMatrix& a);

// Small vector helpers. All operands must have equal length.
void Axpy(double alpha, std::span<const double> x, std::span<double> y);
DenseVector Add(std::span<const double> a, std::span<const double> b);
DenseVector Sub(std::span<const double> a, std::span<const double> b);
double Dot(std::span<const double> a, std::span<const double> b);
double Norm2(std::span<const double> x);
double NormInf(std::span<const double> x);
double Norm1(std::span<const double> x);
bool AllFinite(std::span<const double> x);

using ScalarFunction = std::function<double(const DenseVector&)>;

// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h per coordinate.
DenseVector FiniteDiffGradient(const ScalarFunction& f, const DenseVector& x,
                               double h);

// Norm-wise relative error ||a - b||_2 / max(||a||_2, ||b||_2, floor).
double RelativeError(std::span<const double> a, std::span<const double> b,
                     double floor = 1e-8);

}  // namespace dflsim

#endif  // DFLSIM_NUMERICS_H_
