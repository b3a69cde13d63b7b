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

#include "dflsim/attack.h"

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "dflsim/error.h"

namespace dflsim {
namespace {

DenseMatrix SoftmaxRows(const DenseMatrix& logits) {
  DenseMatrix p(logits.rows(), logits.cols());
  for (std::size_t s = 0; s < logits.rows(); ++s) {
    const DenseVector row = Softmax(logits.row(s));
    std::copy(row.begin(), row.end(), p.row(s).begin());
  }
  return p;
}

// x - step * g, entrywise.
DenseMatrix Step(const DenseMatrix& x, const DenseMatrix& g, double step) {
  DenseMatrix out = x;
  Axpy(-step, g.data(), out.data());
  return out;
}

void LogRegObjectiveGradient(const ModelSpec& spec,
                             std::span<const double> theta,
                             std::span<const double> received,
                             const DenseMatrix& x_hat,
                             const DenseMatrix& label_logits,
                             DenseMatrix& grad_x, DenseMatrix& grad_logits) {
  const std::size_t n = x_hat.rows();
  const std::size_t k = spec.n_classes;
  const std::size_t d = spec.dim;
  const DenseMatrix y_hat = SoftmaxRows(label_logits);
  const DenseVector g = GradWeightsSoft(spec, theta, x_hat, y_hat);
  const DenseVector r = Sub(g, received);  // [R_W | r_b]
  const double scale = 2.0 / static_cast<double>(n);

  grad_x = DenseMatrix(n, d);
  grad_logits = DenseMatrix(n, k);
  DenseVector v(k);  // R_W x_s + r_b
  DenseVector jv(k);
  for (std::size_t s = 0; s < n; ++s) {
    const auto xs = x_hat.row(s);
    const DenseVector p = Softmax(Logits(spec, theta, xs));
    const auto ys = y_hat.row(s);
    for (std::size_t c = 0; c < k; ++c) {
      double acc = r[k * d + c];
      for (std::size_t j = 0; j < d; ++j) acc += r[c * d + j] * xs[j];
      v[c] = acc;
    }
    // dJ/dx_s = scale * (R_W^T e_s + W^T J_p v), J_p = diag(p) - p p^T.
    const double pv = Dot(p, v);
    for (std::size_t c = 0; c < k; ++c) jv[c] = p[c] * (v[c] - pv);
    auto gx = grad_x.row(s);
    for (std::size_t c = 0; c < k; ++c) {
      const double e = p[c] - ys[c];
      for (std::size_t j = 0; j < d; ++j) {
        gx[j] += scale * (r[c * d + j] * e + theta[c * d + j] * jv[c]);
      }
    }
    // dJ/dz_s = -scale * J_y v, J_y = diag(y) - y y^T.
    const double yv = Dot(ys, v);
    auto gz = grad_logits.row(s);
    for (std::size_t c = 0; c < k; ++c) gz[c] = -scale * ys[c] * (v[c] - yv);
  }
}

DenseMatrix CentralDifference(const std::function<double(const DenseMatrix&)>& f,
                              const DenseMatrix& at, double h) {
  DenseMatrix grad(at.rows(), at.cols());
  DenseMatrix probe = at;
  for (std::size_t i = 0; i < at.data().size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double up = f(probe);
    probe.data()[i] = orig - h;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace

void AttackConfig::Validate() const {
  if (iterations < 0) throw Error(ErrorCode::kParameter, "iterations < 0");
  if (!(step_size > 0.0)) throw Error(ErrorCode::kParameter, "step_size <= 0");
  if (restarts < 1) throw Error(ErrorCode::kParameter, "restarts < 1");
  if (target_round < 0) throw Error(ErrorCode::kParameter, "target_round < 0");
  if (max_halvings < 0) throw Error(ErrorCode::kParameter, "max_halvings < 0");
  if (!(fd_step > 0.0)) throw Error(ErrorCode::kParameter, "fd_step <= 0");
}

double DlgObjective(const ModelSpec& spec, std::span<const double> theta,
                    std::span<const double> received, const DenseMatrix& x_hat,
                    const DenseMatrix& label_logits) {
  const DenseVector g =
      GradWeightsSoft(spec, theta, x_hat, SoftmaxRows(label_logits));
  const DenseVector r = Sub(g, received);
  return Dot(r, r);
}

void DlgObjectiveGradient(const ModelSpec& spec, std::span<const double> theta,
                          std::span<const double> received,
                          const DenseMatrix& x_hat,
                          const DenseMatrix& label_logits, double fd_step,
                          DenseMatrix& grad_x, DenseMatrix& grad_logits) {
  if (spec.kind == ModelKind::kLogReg) {
    LogRegObjectiveGradient(spec, theta, received, x_hat, label_logits, grad_x,
                            grad_logits);
    return;
  }
  grad_x = CentralDifference(
      [&](const DenseMatrix& x) {
        return DlgObjective(spec, theta, received, x, label_logits);
      },
      x_hat, fd_step);
  grad_logits = CentralDifference(
      [&](const DenseMatrix& z) {
        return DlgObjective(spec, theta, received, x_hat, z);
      },
      label_logits, fd_step);
}

ReconstructionResult DlgAttack(const ModelSpec& spec,
                               std::span<const double> victim_theta,
                               std::span<const double> received_gamma,
                               const BatchShape& shape,
                               const DenseMatrix& true_features,
                               const AttackConfig& cfg) {
  cfg.Validate();
  spec.Validate();
  if (received_gamma.size() != spec.ParamCount() ||
      victim_theta.size() != spec.ParamCount()) {
    throw Error(ErrorCode::kParameter,
                "received gamma / theta must have the model's parameter count");
  }
  if (shape.dim != spec.dim || shape.n_samples == 0) {
    throw Error(ErrorCode::kParameter, "batch shape does not match the model");
  }

  ReconstructionResult best;
  bool have_best = false;
  for (int restart = 0; restart < cfg.restarts; ++restart) {
    SeededRng rng(cfg.init_seed,
                  StreamId(StreamPurpose::kAttack,
                           static_cast<std::uint64_t>(restart)));
    DenseMatrix x(shape.n_samples, shape.dim);
    for (double& v : x.data()) v = rng.Uniform(0.0, 1.0);
    DenseMatrix z(shape.n_samples, spec.n_classes);
    for (double& v : z.data()) v = rng.Normal();

    double j = std::numeric_limits<double>::quiet_NaN();
    int used = 0;
    bool aborted = false;
    try {
      j = DlgObjective(spec, victim_theta, received_gamma, x, z);
      if (!std::isfinite(j)) aborted = true;
      DenseMatrix gx, gz;
      for (int it = 0; it < cfg.iterations && !aborted; ++it) {
        DlgObjectiveGradient(spec, victim_theta, received_gamma, x, z,
                             cfg.fd_step, gx, gz);
        if (!AllFinite(gx.data()) || !AllFinite(gz.data())) {
          aborted = true;
          break;
        }
        double step = cfg.step_size;
        bool accepted = false;
        for (int h = 0; h <= cfg.max_halvings; ++h, step *= 0.5) {
          DenseMatrix x_try = Step(x, gx, step);
          DenseMatrix z_try = Step(z, gz, step);
          double j_try = std::numeric_limits<double>::infinity();
          try {
            j_try = DlgObjective(spec, victim_theta, received_gamma, x_try,
                                 z_try);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kNumeric) throw;
          }
          if (std::isfinite(j_try) && j_try < j) {
            x = std::move(x_try);
            z = std::move(z_try);
            j = j_try;
            accepted = true;
            break;
          }
        }
        if (!accepted) break;
        ++used;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      aborted = true;
    }
    if (aborted) {
      ++best.aborted_restarts;
      continue;
    }
    if (!have_best || j < best.objective) {
      const int aborted_so_far = best.aborted_restarts;
      best.x_hat = std::move(x);
      best.y_hat = SoftmaxRows(z);
      best.objective = j;
      best.grad_match_residual = std::sqrt(j);
      best.iterations_used = used;
      best.best_restart = restart;
      best.aborted_restarts = aborted_so_far;
      have_best = true;
    }
  }
  if (!have_best) {
    throw Error(ErrorCode::kNumeric, "every attack restart hit a non-finite "
                                     "objective");
  }
  best.mse = Mse(best.x_hat, true_features);
  return best;
}

double Mse(const DenseMatrix& x_hat, const DenseMatrix& x_true) {
  if (x_hat.rows() != x_true.rows() || x_hat.cols() != x_true.cols()) {
    throw Error(ErrorCode::kParameter, "MSE operands differ in shape");
  }
  if (x_hat.data().empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < x_hat.data().size(); ++i) {
    const double d = x_hat.data()[i] - x_true.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(x_hat.data().size());
}

}  // namespace dflsim
