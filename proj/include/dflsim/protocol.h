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

#ifndef DFLSIM_PROTOCOL_H_
#define DFLSIM_PROTOCOL_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dflsim/data.h"
#include "dflsim/model.h"
#include "dflsim/numerics.h"
#include "dflsim/topology.h"

namespace dflsim {

enum class RuleKind { kDsgt, kDp, kLppa };

struct AggregationRule {
  RuleKind kind = RuleKind::kDsgt;
  double beta = 0.0;  // Laplace scale; dp and lppa only

  static AggregationRule Dsgt() { return {RuleKind::kDsgt, 0.0}; }
  static AggregationRule Dp(double beta) { return {RuleKind::kDp, beta}; }
  static AggregationRule Lppa(double beta) { return {RuleKind::kLppa, beta}; }

  void Validate() const;
  std::string_view name() const;
};

RuleKind ParseRuleKind(std::string_view name);

// Pairwise noise vectors delta_{l<-i}: sent by client i to out-neighbor l.
// Holds exactly one entry per non-self edge of the topology it was drawn on.
class NoiseLedger {
 public:
  NoiseLedger() = default;
  explicit NoiseLedger(std::size_t dim) : dim_(dim) {}

  void Set(std::size_t receiver, std::size_t sender, DenseVector delta);
  // Zero vector for pairs that do not communicate.
  DenseVector Get(std::size_t receiver, std::size_t sender) const;
  bool Contains(std::size_t receiver, std::size_t sender) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::map<Edge, DenseVector> entries_;  // keyed {from = sender, to = receiver}
};

// One Laplace(0, beta)^dim vector per directed non-self edge, each drawn
// from that edge's own stream.
NoiseLedger ExchangeNoise(const Digraph& g, double beta, std::size_t dim,
                          std::uint64_t seed);

// Total noise client i sent to out-neighbors minus total it received from
// in-neighbors.
DenseVector NoiseDifference(const NoiseLedger& ledger, const Digraph& g,
                            std::size_t i);
// Rows are per-client totals sent (Delta^S) and received (Delta^R).
DenseMatrix SentNoise(const NoiseLedger& ledger, const Digraph& g);
DenseMatrix ReceivedNoise(const NoiseLedger& ledger, const Digraph& g);

struct ClientState {
  std::size_t id = 0;
  DenseVector theta;
  DenseVector gamma;
  // Gradient most recently added into gamma; subtracted at the next round.
  DenseVector cached_grad;
  // Shard rows behind cached_grad.
  std::vector<std::size_t> batch_indices;
  Dataset shard;
  SeededRng batch_rng{0, 0};
};

struct SimulationState {
  int round = 0;
  ModelSpec model;
  AggregationRule rule;
  WeightMatrix w;
  std::vector<ClientState> clients;
  std::optional<NoiseLedger> ledger;  // lppa
  DenseMatrix dp_noise;               // Z, one row per client; dp only
  // Gamma^0 minus the initial gradients: Delta^S - Delta^R for lppa, Z for
  // dp, zeros for dsgt.
  DenseMatrix protection;
  double noise_diff_sum_norm = 0.0;  // ||sum_i noise difference||_inf
  std::size_t batch_size = 256;
  bool diverged = false;
  int diverged_round = -1;

  std::size_t size() const { return clients.size(); }
  std::size_t param_count() const { return model.ParamCount(); }
};

struct RoundMetrics {
  int round = 0;
  std::vector<double> loss;      // per client, on its full shard
  std::vector<double> accuracy;  // per client, on the evaluation set
  double consensus_accuracy = 0.0;  // client-average theta on eval set
  double consensus_distance = 0.0;
  double tracking_residual = 0.0;
  double noise_diff_sum_norm = 0.0;
  bool diverged = false;
};

inline constexpr std::size_t kDefaultBatchSize = 256;

// Uniformly samples min(batch_size, shard size) distinct rows, sorted.
std::vector<std::size_t> SampleBatch(std::size_t shard_size,
                                     std::size_t batch_size, SeededRng& rng);

// Builds round-0 state: random theta, one batch, cached initial gradient,
// and gamma = gradient + rule-specific protection term. Per-client streams
// depend only on (seed, client), so rules sharing a seed share theta^0 and
// batches.
SimulationState InitClients(const AggregationRule& rule, const ModelSpec& model,
                            const std::vector<Dataset>& shards,
                            const Digraph& topology, const WeightMatrix& w,
                            std::uint64_t seed,
                            std::size_t batch_size = kDefaultBatchSize);

// One synchronous gradient-tracking round. Every client reads round-t
// values; reductions run in ascending client id. With local_epochs > 1,
// local_epochs - 1 plain gradient steps follow the aggregation step before
// the new gradient is taken. A non-finite theta or gamma flags divergence;
// later calls are no-ops.
RoundMetrics DsgtRound(SimulationState& state, double lambda,
                       int local_epochs = 1, const Dataset* eval = nullptr);

// Same update algebra with gradients replaced by per-client constants.
void FrozenGradientRound(SimulationState& state,
                         const std::vector<DenseVector>& fixed_gradients,
                         double lambda);

double ConsensusDistance(const SimulationState& state);
// ||sum_i gamma_i - sum_i cached_grad_i||_2
double TrackingResidual(const SimulationState& state);
DenseVector AverageTheta(const SimulationState& state);
// Rows are gamma_i.
DenseMatrix GammaMatrix(const SimulationState& state);

// `eval` defaults to each client's shard when null.
RoundMetrics ComputeMetrics(const SimulationState& state,
                            const Dataset* eval = nullptr);

struct SimulationConfig {
  AggregationRule rule;
  ModelSpec model;
  double lambda = 0.05;
  int rounds = 50;
  int local_epochs = 1;
  std::size_t batch_size = kDefaultBatchSize;
  std::uint64_t seed = 0;

  void Validate() const;
};

struct SimulationResult {
  RoundMetrics initial;
  std::vector<RoundMetrics> history;  // one entry per executed round
  SimulationState final_state;
  DenseVector consensus_theta;
};

SimulationResult RunSimulation(const SimulationConfig& config,
                               const Digraph& topology, const WeightMatrix& w,
                               const std::vector<Dataset>& shards,
                               const Dataset* eval = nullptr);

}  // namespace dflsim

#endif  // DFLSIM_PROTOCOL_H_
