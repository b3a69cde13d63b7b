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

#include "dflsim/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "dflsim/error.h"

namespace dflsim {
namespace {

// Offsets of each block inside the flat parameter vector.
struct Layout {
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0, total = 0;
};

Layout MakeLayout(const ModelSpec& spec) {
  Layout l;
  if (spec.kind == ModelKind::kLogReg) {
    l.w1 = 0;
    l.b1 = spec.n_classes * spec.dim;
    l.total = l.b1 + spec.n_classes;
  } else {
    l.w1 = 0;
    l.b1 = spec.hidden * spec.dim;
    l.w2 = l.b1 + spec.hidden;
    l.b2 = l.w2 + spec.n_classes * spec.hidden;
    l.total = l.b2 + spec.n_classes;
  }
  return l;
}

void CheckShapes(const ModelSpec& spec, std::span<const double> theta,
                 const DenseMatrix& features, std::size_t n_rows) {
  if (theta.size() != spec.ParamCount()) {
    throw Error(ErrorCode::kParameter,
                "theta has length " + std::to_string(theta.size()) +
                    ", model expects " + std::to_string(spec.ParamCount()));
  }
  if (features.cols() != spec.dim) {
    throw Error(ErrorCode::kParameter, "feature dimension mismatch");
  }
  if (features.rows() != n_rows || n_rows == 0) {
    throw Error(ErrorCode::kParameter, "batch is empty or misshapen");
  }
}

// y = M x + bias for a row-major M stored at theta[offset].
void Affine(std::span<const double> theta, std::size_t w_off,
            std::size_t b_off, std::size_t out_dim, std::span<const double> x,
            std::span<double> y) {
  const std::size_t in_dim = x.size();
  for (std::size_t o = 0; o < out_dim; ++o) {
    double s = theta[b_off + o];
    const double* w = theta.data() + w_off + o * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) s += w[i] * x[i];
    y[o] = s;
  }
}

struct BackpropResult {
  double loss = 0.0;
  DenseVector weight_grad;
  DenseMatrix input_grad;
};

// Mean cross-entropy against soft targets, with optional gradients. For
// a target row t the logit gradient is p * sum(t) - t.
BackpropResult Backprop(const ModelSpec& spec, std::span<const double> theta,
                        const DenseMatrix& x, const DenseMatrix& targets,
                        bool want_weights, bool want_inputs) {
  CheckShapes(spec, theta, x, targets.rows());
  if (targets.cols() != spec.n_classes) {
    throw Error(ErrorCode::kParameter, "target width mismatch");
  }
  const Layout layout = MakeLayout(spec);
  const std::size_t n = x.rows();
  const std::size_t k = spec.n_classes;
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool mlp = spec.kind == ModelKind::kMlp;

  BackpropResult r;
  if (want_weights) r.weight_grad.assign(layout.total, 0.0);
  if (want_inputs) r.input_grad = DenseMatrix(n, spec.dim);

  DenseVector hidden(mlp ? spec.hidden : 0);
  DenseVector logits(k);
  DenseVector dz(k);
  DenseVector dh(mlp ? spec.hidden : 0);
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto xs = x.row(s);
    std::span<const double> last_input = xs;
    if (mlp) {
      Affine(theta, layout.w1, layout.b1, spec.hidden, xs, hidden);
      for (double& h : hidden) h = std::tanh(h);
      Affine(theta, layout.w2, layout.b2, k, hidden, logits);
      last_input = hidden;
    } else {
      Affine(theta, layout.w1, layout.b1, k, xs, logits);
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    const double log_z = m + std::log(z);
    const auto t = targets.row(s);
    double t_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      total -= t[c] * (logits[c] - log_z);
      t_sum += t[c];
    }
    if (!want_weights && !want_inputs) continue;
    for (std::size_t c = 0; c < k; ++c) {
      dz[c] = (std::exp(logits[c] - log_z) * t_sum - t[c]) * inv_n;
    }

    const std::size_t out_w = mlp ? layout.w2 : layout.w1;
    const std::size_t out_b = mlp ? layout.b2 : layout.b1;
    const std::size_t fan_in = last_input.size();
    if (want_weights) {
      for (std::size_t c = 0; c < k; ++c) {
        double* g = r.weight_grad.data() + out_w + c * fan_in;
        for (std::size_t i = 0; i < fan_in; ++i) g[i] += dz[c] * last_input[i];
        r.weight_grad[out_b + c] += dz[c];
      }
    }
    if (!mlp) {
      if (want_inputs) {
        auto gx = r.input_grad.row(s);
        for (std::size_t c = 0; c < k; ++c) {
          const double* w = theta.data() + layout.w1 + c * spec.dim;
          for (std::size_t i = 0; i < spec.dim; ++i) gx[i] += dz[c] * w[i];
        }
      }
      continue;
    }
    // Back through W2 and tanh.
    for (std::size_t h = 0; h < spec.hidden; ++h) {
      double acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        acc += theta[layout.w2 + c * spec.hidden + h] * dz[c];
      }
      dh[h] = acc * (1.0 - hidden[h] * hidden[h]);
    }
    if (want_weights) {
      for (std::size_t h = 0; h < spec.hidden; ++h) {
        double* g = r.weight_grad.data() + layout.w1 + h * spec.dim;
        for (std::size_t i = 0; i < spec.dim; ++i) g[i] += dh[h] * xs[i];
        r.weight_grad[layout.b1 + h] += dh[h];
      }
    }
    if (want_inputs) {
      auto gx = r.input_grad.row(s);
      for (std::size_t h = 0; h < spec.hidden; ++h) {
        const double* w = theta.data() + layout.w1 + h * spec.dim;
        for (std::size_t i = 0; i < spec.dim; ++i) gx[i] += dh[h] * w[i];
      }
    }
  }
  r.loss = total * inv_n;
  if (!std::isfinite(r.loss)) {
    throw Error(ErrorCode::kNumeric, "non-finite loss");
  }
  return r;
}

}  // namespace

std::size_t ModelSpec::ParamCount() const { return MakeLayout(*this).total; }

void ModelSpec::Validate() const {
  if (dim < 1 || n_classes < 1) {
    throw Error(ErrorCode::kParameter, "model needs dim, n_classes >= 1");
  }
  if (kind == ModelKind::kMlp && hidden < 1) {
    throw Error(ErrorCode::kParameter, "mlp needs hidden >= 1");
  }
}

Batch MakeBatch(const Dataset& shard, std::vector<std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::kParameter, "empty batch");
  Dataset sub = shard.Subset(indices);
  return Batch{std::move(sub.features), std::move(sub.labels),
               std::move(indices)};
}

Batch FullBatch(const Dataset& shard) {
  std::vector<std::size_t> all(shard.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return MakeBatch(shard, std::move(all));
}

DenseVector InitParams(const ModelSpec& spec, std::uint64_t seed,
                       std::uint64_t stream) {
  spec.Validate();
  const Layout layout = MakeLayout(spec);
  DenseVector theta(layout.total, 0.0);
  SeededRng rng(seed, StreamId(StreamPurpose::kInitParams, stream));
  auto fill = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (std::size_t i = 0; i < fan_out * fan_in; ++i) {
      theta[offset + i] = rng.Uniform(-a, a);
    }
  };
  if (spec.kind == ModelKind::kLogReg) {
    fill(layout.w1, spec.n_classes, spec.dim);
  } else {
    fill(layout.w1, spec.hidden, spec.dim);
    fill(layout.w2, spec.n_classes, spec.hidden);
  }
  return theta;
}

DenseMatrix OneHot(std::span<const int> labels, std::size_t n_classes) {
  DenseMatrix t(labels.size(), n_classes);
  for (std::size_t s = 0; s < labels.size(); ++s) {
    if (labels[s] < 0 || static_cast<std::size_t>(labels[s]) >= n_classes) {
      throw Error(ErrorCode::kParameter, "label out of range");
    }
    t(s, labels[s]) = 1.0;
  }
  return t;
}

double ForwardLoss(const ModelSpec& spec, std::span<const double> theta,
                   const Batch& batch) {
  return Backprop(spec, theta, batch.features,
                  OneHot(batch.labels, spec.n_classes), false, false)
      .loss;
}

DenseVector GradWeights(const ModelSpec& spec, std::span<const double> theta,
                        const Batch& batch) {
  return Backprop(spec, theta, batch.features,
                  OneHot(batch.labels, spec.n_classes), true, false)
      .weight_grad;
}

DenseMatrix GradInputs(const ModelSpec& spec, std::span<const double> theta,
                       const DenseMatrix& features,
                       std::span<const int> labels) {
  return Backprop(spec, theta, features, OneHot(labels, spec.n_classes),
                  false, true)
      .input_grad;
}

double ForwardLossSoft(const ModelSpec& spec, std::span<const double> theta,
                       const DenseMatrix& features,
                       const DenseMatrix& targets) {
  return Backprop(spec, theta, features, targets, false, false).loss;
}

DenseVector GradWeightsSoft(const ModelSpec& spec,
                            std::span<const double> theta,
                            const DenseMatrix& features,
                            const DenseMatrix& targets) {
  return Backprop(spec, theta, features, targets, true, false).weight_grad;
}

DenseVector Logits(const ModelSpec& spec, std::span<const double> theta,
                   std::span<const double> x) {
  const Layout layout = MakeLayout(spec);
  DenseVector logits(spec.n_classes);
  if (spec.kind == ModelKind::kLogReg) {
    Affine(theta, layout.w1, layout.b1, spec.n_classes, x, logits);
  } else {
    DenseVector hidden(spec.hidden);
    Affine(theta, layout.w1, layout.b1, spec.hidden, x, hidden);
    for (double& h : hidden) h = std::tanh(h);
    Affine(theta, layout.w2, layout.b2, spec.n_classes, hidden, logits);
  }
  return logits;
}

DenseVector Softmax(std::span<const double> logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  DenseVector p(logits.size());
  double z = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    p[c] = std::exp(logits[c] - m);
    z += p[c];
  }
  for (double& v : p) v /= z;
  return p;
}

double Accuracy(const ModelSpec& spec, std::span<const double> theta,
                const Dataset& d) {
  if (d.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t s = 0; s < d.size(); ++s) {
    const DenseVector z = Logits(spec, theta, d.features.row(s));
    const auto best = std::max_element(z.begin(), z.end()) - z.begin();
    if (best == d.labels[s]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

}  // namespace dflsim
