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

#include "dflsim/numerics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dflsim/error.h"

namespace dflsim {
namespace {

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void CheckSameLength(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kParameter,
                std::string(what) + ": length mismatch " + std::to_string(a) +
                    " vs " + std::to_string(b));
  }
}

// log of a Gamma(shape, 1) variate; stays finite for shape << 1 where the
// variate itself underflows.
double LogGammaSample(double shape, SeededRng& rng) {
  if (shape < 1.0) {
    const double u = rng.UniformOpen();
    return LogGammaSample(shape + 1.0, rng) + std::log(u) / shape;
  }
  return std::log(rng.Gamma(shape));
}

}  // namespace

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParameter: return "parameter error";
    case ErrorCode::kNumeric: return "numeric error";
    case ErrorCode::kTopology: return "topology error";
    case ErrorCode::kConvergence: return "convergence error";
    case ErrorCode::kIngestion: return "ingestion error";
    case ErrorCode::kPartition: return "partition error";
    case ErrorCode::kInit: return "init error";
    case ErrorCode::kBudget: return "budget error";
    case ErrorCode::kSensitivity: return "sensitivity error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kIo: return "io error";
  }
  return "error";
}

DenseMatrix DenseMatrix::Identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::FromRows(std::span<const DenseVector> rows) {
  if (rows.empty()) return {};
  DenseMatrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    CheckSameLength(rows[r].size(), m.cols(), "FromRows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

std::uint64_t StreamId(StreamPurpose purpose, std::uint64_t a,
                       std::uint64_t b) {
  std::uint64_t h = SplitMix64(static_cast<std::uint64_t>(purpose));
  h = SplitMix64(h ^ a);
  h = SplitMix64(h ^ (b * 0x632be59bd9b4e019ULL));
  return h;
}

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed),
      stream_id_(stream_id),
      engine_(SplitMix64(SplitMix64(seed) ^ stream_id)) {}

double SeededRng::UniformOpen() {
  constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  return (static_cast<double>(engine_() >> 11) + 0.5) * kInv53;
}

double SeededRng::Uniform(double lo, double hi) {
  constexpr double kInv53 = 1.0 / 9007199254740992.0;
  return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * kInv53);
}

double SeededRng::Normal() {
  if (has_spare_normal_) {
    has_spare_normal_ = false;
    return spare_normal_;
  }
  const double u1 = UniformOpen();
  const double u2 = UniformOpen();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(angle);
  has_spare_normal_ = true;
  return r * std::cos(angle);
}

double SeededRng::Gamma(double shape) {
  if (!(shape > 0.0)) {
    throw Error(ErrorCode::kParameter, "gamma shape must be positive");
  }
  if (shape < 1.0) {
    const double u = UniformOpen();
    return Gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = Normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = UniformOpen();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t SeededRng::Index(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kParameter, "Index(0)");
  // Rejection sampling keeps the draw unbiased for any n.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = 0;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

void Shuffle(std::vector<std::size_t>& items, SeededRng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.Index(i)]);
  }
}

DenseVector SampleDirichlet(std::size_t k, double alpha, SeededRng& rng) {
  if (k == 0 || !(alpha > 0.0)) {
    throw Error(ErrorCode::kParameter, "Dirichlet needs k >= 1, alpha > 0");
  }
  DenseVector logs(k);
  for (auto& l : logs) l = LogGammaSample(alpha, rng);
  const double m = *std::max_element(logs.begin(), logs.end());
  double total = 0.0;
  for (auto& l : logs) {
    l = std::exp(l - m);
    total += l;
  }
  for (auto& l : logs) l /= total;
  return logs;
}

double LaplaceFromUniform(double u, double scale) {
  if (!(scale > 0.0)) {
    throw Error(ErrorCode::kParameter, "Laplace scale must be positive");
  }
  if (u == 0.0) return 0.0;
  const double sign = u > 0.0 ? 1.0 : -1.0;
  return -scale * sign * std::log(1.0 - 2.0 * std::fabs(u));
}

double LaplaceSample(SeededRng& rng, const LaplaceSpec& spec) {
  if (!(spec.scale > 0.0)) {
    throw Error(ErrorCode::kParameter, "Laplace scale must be positive");
  }
  return LaplaceFromUniform(rng.UniformOpen() - 0.5, spec.scale);
}

DenseVector LaplaceVector(SeededRng& rng, std::size_t dim,
                          const LaplaceSpec& spec) {
  if (dim == 0) throw Error(ErrorCode::kParameter, "Laplace vector dim = 0");
  DenseVector out(dim);
  for (auto& v : out) v = LaplaceSample(rng, spec);
  return out;
}

DenseMatrix MatMul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kParameter,
                "MatMul: inner dimensions " + std::to_string(a.cols()) +
                    " and " + std::to_string(b.rows()) + " differ");
  }
  DenseMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

DenseMatrix MatPow(const DenseMatrix& w, int t) {
  if (w.rows() != w.cols()) {
    throw Error(ErrorCode::kParameter, "MatPow: matrix is not square");
  }
  if (t < 0) throw Error(ErrorCode::kParameter, "MatPow: negative power");
  DenseMatrix result = DenseMatrix::Identity(w.rows());
  for (int i = 0; i < t; ++i) result = MatMul(w, result);
  return result;
}

DenseVector MatVec(const DenseMatrix& a, std::span<const double> x) {
  CheckSameLength(a.cols(), x.size(), "MatVec");
  DenseVector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = Dot(a.row(i), x);
  return y;
}

DenseMatrix Transpose(const DenseMatrix& a) {
  DenseMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

DenseMatrix Subtract(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kParameter, "Subtract: shape mismatch");
  }
  DenseMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  }
  return c;
}

double MaxAbs(const DenseMatrix& a) { return NormInf(a.data()); }

void Axpy(double alpha, std::span<const double> x, std::span<double> y) {
  CheckSameLength(x.size(), y.size(), "Axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

DenseVector Add(std::span<const double> a, std::span<const double> b) {
  CheckSameLength(a.size(), b.size(), "Add");
  DenseVector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] + b[i];
  return c;
}

DenseVector Sub(std::span<const double> a, std::span<const double> b) {
  CheckSameLength(a.size(), b.size(), "Sub");
  DenseVector c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  CheckSameLength(a.size(), b.size(), "Dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double Norm2(std::span<const double> x) { return std::sqrt(Dot(x, x)); }

double NormInf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::fabs(v));
  return m;
}

double Norm1(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::fabs(v);
  return s;
}

bool AllFinite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(),
                     [](double v) { return std::isfinite(v); });
}

DenseVector FiniteDiffGradient(const ScalarFunction& f, const DenseVector& x,
                               double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::kParameter, "step h must be > 0");
  DenseVector grad(x.size());
  DenseVector probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = f(probe);
    probe[k] = x[k] - h;
    const double down = f(probe);
    probe[k] = x[k];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error(ErrorCode::kNumeric,
                  "non-finite function value at coordinate " +
                      std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double RelativeError(std::span<const double> a, std::span<const double> b,
                     double floor) {
  const double scale = std::max({Norm2(a), Norm2(b), floor});
  return Norm2(Sub(a, b)) / scale;
}

}  // namespace dflsim
