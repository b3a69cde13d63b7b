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

#include "dflsim/protocol.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dflsim/error.h"

namespace dflsim {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// sum_j w(i, j) * rows[j], j ascending.
DenseVector MixRow(const WeightMatrix& w, std::size_t i,
                   const std::vector<const DenseVector*>& rows) {
  DenseVector out(rows[0]->size(), 0.0);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const double wij = w(i, j);
    if (wij != 0.0) Axpy(wij, *rows[j], out);
  }
  return out;
}

// `round` is the first round whose state is non-finite.
void MarkDiverged(SimulationState& state, int round) {
  if (!state.diverged) {
    state.diverged = true;
    state.diverged_round = round;
  }
}

bool StateFinite(const SimulationState& state) {
  return std::all_of(state.clients.begin(), state.clients.end(),
                     [](const ClientState& c) {
                       return AllFinite(c.theta) && AllFinite(c.gamma);
                     });
}

}  // namespace

void AggregationRule::Validate() const {
  if (kind != RuleKind::kDsgt && !(beta > 0.0 && std::isfinite(beta))) {
    throw Error(ErrorCode::kParameter,
                std::string(name()) + " needs a positive finite beta");
  }
}

std::string_view AggregationRule::name() const {
  switch (kind) {
    case RuleKind::kDsgt: return "dsgt";
    case RuleKind::kDp: return "dp";
    case RuleKind::kLppa: return "lppa";
  }
  return "?";
}

RuleKind ParseRuleKind(std::string_view name) {
  if (name == "dsgt") return RuleKind::kDsgt;
  if (name == "dp") return RuleKind::kDp;
  if (name == "lppa") return RuleKind::kLppa;
  throw Error(ErrorCode::kConfig,
              "unknown rule '" + std::string(name) + "' (dsgt | dp | lppa)");
}

void NoiseLedger::Set(std::size_t receiver, std::size_t sender,
                      DenseVector delta) {
  if (delta.size() != dim_) {
    throw Error(ErrorCode::kParameter, "noise vector dimension mismatch");
  }
  entries_[Edge{sender, receiver}] = std::move(delta);
}

DenseVector NoiseLedger::Get(std::size_t receiver, std::size_t sender) const {
  const auto it = entries_.find(Edge{sender, receiver});
  return it == entries_.end() ? DenseVector(dim_, 0.0) : it->second;
}

bool NoiseLedger::Contains(std::size_t receiver, std::size_t sender) const {
  return entries_.contains(Edge{sender, receiver});
}

NoiseLedger ExchangeNoise(const Digraph& g, double beta, std::size_t dim,
                          std::uint64_t seed) {
  if (!(beta > 0.0)) throw Error(ErrorCode::kParameter, "beta must be > 0");
  NoiseLedger ledger(dim);
  for (const Edge& e : g.NonSelfEdges()) {
    SeededRng rng(seed, StreamId(StreamPurpose::kEdgeNoise, e.from, e.to));
    ledger.Set(e.to, e.from, LaplaceVector(rng, dim, LaplaceSpec{beta}));
  }
  return ledger;
}

DenseVector NoiseDifference(const NoiseLedger& ledger, const Digraph& g,
                            std::size_t i) {
  DenseVector sent(ledger.dim(), 0.0);
  DenseVector received(ledger.dim(), 0.0);
  for (std::size_t l : g.out_neighbors(i)) {
    if (l != i) Axpy(1.0, ledger.Get(l, i), sent);
  }
  for (std::size_t j : g.in_neighbors(i)) {
    if (j != i) Axpy(1.0, ledger.Get(i, j), received);
  }
  return Sub(sent, received);
}

DenseMatrix SentNoise(const NoiseLedger& ledger, const Digraph& g) {
  DenseMatrix m(g.size(), ledger.dim());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t l : g.out_neighbors(i)) {
      if (l != i) Axpy(1.0, ledger.Get(l, i), m.row(i));
    }
  }
  return m;
}

DenseMatrix ReceivedNoise(const NoiseLedger& ledger, const Digraph& g) {
  DenseMatrix m(g.size(), ledger.dim());
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j : g.in_neighbors(i)) {
      if (j != i) Axpy(1.0, ledger.Get(i, j), m.row(i));
    }
  }
  return m;
}

std::vector<std::size_t> SampleBatch(std::size_t shard_size,
                                     std::size_t batch_size, SeededRng& rng) {
  if (shard_size == 0 || batch_size == 0) {
    throw Error(ErrorCode::kParameter, "cannot sample from an empty shard");
  }
  std::vector<std::size_t> all(shard_size);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (batch_size >= shard_size) return all;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + rng.Index(shard_size - i);
    std::swap(all[i], all[j]);
  }
  all.resize(batch_size);
  std::sort(all.begin(), all.end());
  return all;
}

SimulationState InitClients(const AggregationRule& rule, const ModelSpec& model,
                            const std::vector<Dataset>& shards,
                            const Digraph& topology, const WeightMatrix& w,
                            std::uint64_t seed, std::size_t batch_size) {
  rule.Validate();
  model.Validate();
  const std::size_t n = topology.size();
  if (shards.size() != n || w.size() != n) {
    throw Error(ErrorCode::kInit,
                "need one shard and one W row per client; got " +
                    std::to_string(shards.size()) + " shards, " +
                    std::to_string(w.size()) + " W rows, " +
                    std::to_string(n) + " clients");
  }
  const std::size_t p = model.ParamCount();

  SimulationState state;
  state.model = model;
  state.rule = rule;
  state.w = w;
  state.batch_size = batch_size;
  state.protection = DenseMatrix(n, p);
  state.clients.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (shards[i].size() == 0) {
      throw Error(ErrorCode::kInit, "client " + std::to_string(i) +
                                        " has an empty shard");
    }
    ClientState c;
    c.id = i;
    c.shard = shards[i];
    c.theta = InitParams(model, seed, i);
    c.batch_rng = SeededRng(seed, StreamId(StreamPurpose::kBatch, i));
    c.batch_indices = SampleBatch(c.shard.size(), batch_size, c.batch_rng);
    c.cached_grad = GradWeights(model, c.theta, MakeBatch(c.shard, c.batch_indices));
    c.gamma = c.cached_grad;
    state.clients.push_back(std::move(c));
  }

  switch (rule.kind) {
    case RuleKind::kDsgt:
      break;
    case RuleKind::kDp: {
      state.dp_noise = DenseMatrix(n, p);
      for (std::size_t i = 0; i < n; ++i) {
        SeededRng rng(seed, StreamId(StreamPurpose::kDpNoise, i));
        const DenseVector zeta = LaplaceVector(rng, p, LaplaceSpec{rule.beta});
        std::copy(zeta.begin(), zeta.end(), state.dp_noise.row(i).begin());
      }
      state.protection = state.dp_noise;
      break;
    }
    case RuleKind::kLppa: {
      state.ledger = ExchangeNoise(topology, rule.beta, p, seed);
      DenseVector total(p, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const DenseVector diff = NoiseDifference(*state.ledger, topology, i);
        std::copy(diff.begin(), diff.end(), state.protection.row(i).begin());
        Axpy(1.0, diff, total);
      }
      state.noise_diff_sum_norm = NormInf(total);
      break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    Axpy(1.0, state.protection.row(i), state.clients[i].gamma);
  }
  if (!StateFinite(state)) MarkDiverged(state, 0);
  return state;
}

RoundMetrics DsgtRound(SimulationState& state, double lambda, int local_epochs,
                       const Dataset* eval) {
  if (local_epochs < 1) {
    throw Error(ErrorCode::kParameter, "local_epochs must be >= 1");
  }
  if (!state.diverged) {
    const std::size_t n = state.size();
    std::vector<const DenseVector*> thetas(n), gammas(n);
    for (std::size_t j = 0; j < n; ++j) {
      thetas[j] = &state.clients[j].theta;
      gammas[j] = &state.clients[j].gamma;
    }
    std::vector<DenseVector> next_theta(n), next_gamma(n), next_grad(n);
    std::vector<std::vector<std::size_t>> next_batch(n);
    try {
      for (std::size_t i = 0; i < n; ++i) {
        ClientState& c = state.clients[i];
        next_theta[i] = MixRow(state.w, i, thetas);
        Axpy(-lambda, c.gamma, next_theta[i]);
        next_batch[i] =
            SampleBatch(c.shard.size(), state.batch_size, c.batch_rng);
        const Batch batch = MakeBatch(c.shard, next_batch[i]);
        for (int e = 1; e < local_epochs; ++e) {
          Axpy(-lambda, GradWeights(state.model, next_theta[i], batch),
               next_theta[i]);
        }
        next_grad[i] = GradWeights(state.model, next_theta[i], batch);
        next_gamma[i] = MixRow(state.w, i, gammas);
        Axpy(1.0, next_grad[i], next_gamma[i]);
        Axpy(-1.0, c.cached_grad, next_gamma[i]);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      MarkDiverged(state, state.round + 1);
    }
    if (!state.diverged) {
      for (std::size_t i = 0; i < n; ++i) {
        ClientState& c = state.clients[i];
        c.theta = std::move(next_theta[i]);
        c.gamma = std::move(next_gamma[i]);
        c.cached_grad = std::move(next_grad[i]);
        c.batch_indices = std::move(next_batch[i]);
      }
      if (!StateFinite(state)) MarkDiverged(state, state.round + 1);
    }
  }
  ++state.round;
  return ComputeMetrics(state, eval);
}

void FrozenGradientRound(SimulationState& state,
                         const std::vector<DenseVector>& fixed_gradients,
                         double lambda) {
  const std::size_t n = state.size();
  if (fixed_gradients.size() != n) {
    throw Error(ErrorCode::kParameter, "one fixed gradient per client needed");
  }
  std::vector<const DenseVector*> thetas(n), gammas(n);
  for (std::size_t j = 0; j < n; ++j) {
    thetas[j] = &state.clients[j].theta;
    gammas[j] = &state.clients[j].gamma;
  }
  std::vector<DenseVector> next_theta(n), next_gamma(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ClientState& c = state.clients[i];
    next_theta[i] = MixRow(state.w, i, thetas);
    Axpy(-lambda, c.gamma, next_theta[i]);
    next_gamma[i] = MixRow(state.w, i, gammas);
    Axpy(1.0, fixed_gradients[i], next_gamma[i]);
    Axpy(-1.0, c.cached_grad, next_gamma[i]);
  }
  for (std::size_t i = 0; i < n; ++i) {
    ClientState& c = state.clients[i];
    c.theta = std::move(next_theta[i]);
    c.gamma = std::move(next_gamma[i]);
    c.cached_grad = fixed_gradients[i];
  }
  ++state.round;
}

double ConsensusDistance(const SimulationState& state) {
  double worst = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i) {
    for (std::size_t j = i + 1; j < state.size(); ++j) {
      worst = std::max(
          worst, Norm2(Sub(state.clients[i].theta, state.clients[j].theta)));
    }
  }
  return worst;
}

double TrackingResidual(const SimulationState& state) {
  DenseVector diff(state.param_count(), 0.0);
  for (const ClientState& c : state.clients) {
    Axpy(1.0, c.gamma, diff);
    Axpy(-1.0, c.cached_grad, diff);
  }
  return Norm2(diff);
}

DenseVector AverageTheta(const SimulationState& state) {
  DenseVector avg(state.param_count(), 0.0);
  for (const ClientState& c : state.clients) Axpy(1.0, c.theta, avg);
  for (double& v : avg) v /= static_cast<double>(state.size());
  return avg;
}

DenseMatrix GammaMatrix(const SimulationState& state) {
  DenseMatrix m(state.size(), state.param_count());
  for (std::size_t i = 0; i < state.size(); ++i) {
    std::copy(state.clients[i].gamma.begin(), state.clients[i].gamma.end(),
              m.row(i).begin());
  }
  return m;
}

RoundMetrics ComputeMetrics(const SimulationState& state, const Dataset* eval) {
  RoundMetrics m;
  m.round = state.round;
  m.noise_diff_sum_norm = state.noise_diff_sum_norm;
  m.diverged = state.diverged;
  const std::size_t n = state.size();
  if (state.diverged) {
    m.loss.assign(n, kNaN);
    m.accuracy.assign(n, kNaN);
    m.consensus_accuracy = kNaN;
    m.consensus_distance = kNaN;
    m.tracking_residual = kNaN;
    return m;
  }
  m.loss.resize(n);
  m.accuracy.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ClientState& c = state.clients[i];
    try {
      m.loss[i] = ForwardLoss(state.model, c.theta, FullBatch(c.shard));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNumeric) throw;
      m.loss[i] = kNaN;
    }
    m.accuracy[i] = Accuracy(state.model, c.theta, eval ? *eval : c.shard);
  }
  if (eval) {
    m.consensus_accuracy = Accuracy(state.model, AverageTheta(state), *eval);
  } else {
    double sum = 0.0;
    const DenseVector avg = AverageTheta(state);
    for (const ClientState& c : state.clients) {
      sum += Accuracy(state.model, avg, c.shard) *
             static_cast<double>(c.shard.size());
    }
    std::size_t total = 0;
    for (const ClientState& c : state.clients) total += c.shard.size();
    m.consensus_accuracy = sum / static_cast<double>(total);
  }
  m.consensus_distance = ConsensusDistance(state);
  m.tracking_residual = TrackingResidual(state);
  return m;
}

void SimulationConfig::Validate() const {
  rule.Validate();
  model.Validate();
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw Error(ErrorCode::kConfig, "lambda must be positive");
  }
  if (rounds < 0) throw Error(ErrorCode::kConfig, "rounds must be >= 0");
  if (local_epochs < 1) {
    throw Error(ErrorCode::kConfig, "local_epochs must be >= 1");
  }
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch_size must be >= 1");
}

SimulationResult RunSimulation(const SimulationConfig& config,
                               const Digraph& topology, const WeightMatrix& w,
                               const std::vector<Dataset>& shards,
                               const Dataset* eval) {
  config.Validate();
  SimulationResult result;
  result.final_state = InitClients(config.rule, config.model, shards, topology,
                                   w, config.seed, config.batch_size);
  result.initial = ComputeMetrics(result.final_state, eval);
  result.history.reserve(config.rounds);
  for (int t = 0; t < config.rounds; ++t) {
    result.history.push_back(DsgtRound(result.final_state, config.lambda,
                                       config.local_epochs, eval));
  }
  result.consensus_theta = AverageTheta(result.final_state);
  return result;
}

}  // namespace dflsim
