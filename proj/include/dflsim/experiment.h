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

#ifndef DFLSIM_EXPERIMENT_H_
#define DFLSIM_EXPERIMENT_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dflsim/attack.h"
#include "dflsim/data.h"
#include "dflsim/model.h"
#include "dflsim/protocol.h"
#include "dflsim/topology.h"
#include "json.hpp"

namespace dflsim {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kOutputDirEnv = "DFLSIM_OUTPUT_DIR";

struct TopologyConfig {
  TopologyKind kind = TopologyKind::kFull;
  std::size_t n = 5;
  std::string edge_list;  // custom only
};

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | csv
  int n_classes = 2;
  std::size_t dim = 10;
  std::size_t n_samples = 1000;
  double separation = 4.0;
  bool normalize = false;  // synthetic only; csv is always normalized
  std::string csv_path;
  std::string label_column = "label";
  double test_fraction = 0.2;
};

struct AttackSection {
  AttackConfig attack;
  std::size_t victim = 0;
  // Batch size used by every client while the protocol runs up to the
  // attacked round.
  std::size_t batch_size = 1;
};

struct PrivacySection {
  // Empty: estimate per client by leave-one-out sensitivity at theta^0.
  // One entry: uniform. Otherwise one entry per client.
  std::vector<double> delta_f;
  // Empty: uniform `beta` from the experiment.
  std::vector<double> beta_per_client;
  int t_max = 25;
};

// Defaults: 5 clients, full topology, lambda 0.05, batch 256, 50 rounds,
// one local epoch, beta 0.025, seeds 0..4.
struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  TopologyConfig topology;
  std::vector<RuleKind> rules = {RuleKind::kDsgt, RuleKind::kDp,
                                 RuleKind::kLppa};
  double beta = 0.025;
  std::vector<double> beta_list = {0.025, 0.1, 0.5};
  ModelKind model_kind = ModelKind::kLogReg;
  std::size_t hidden = 16;
  DatasetConfig dataset;
  PartitionSpec partition;  // seed is replaced by the run seed
  double lambda = 0.05;
  int rounds = 50;
  int local_epochs = 1;
  std::size_t batch_size = kDefaultBatchSize;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  bool sweep_attack = true;
  AttackSection attack;
  PrivacySection privacy;
  std::string output_dir = "dflsim_out";

  // Throws a config error naming the offending field.
  void Validate() const;
};

// Strict parse: unknown keys and a wrong schema_version are config errors.
ExperimentConfig ConfigFromJson(const nlohmann::json& doc);
nlohmann::json ConfigToJson(const ExperimentConfig& config);
ExperimentConfig LoadConfig(const std::filesystem::path& path);

// Everything one seed's runs share: every rule sees the same W, partition
// and test split.
struct Environment {
  Digraph topology;
  WeightMatrix w;
  ModelSpec model;
  std::vector<Dataset> shards;
  Dataset test;
};

Environment BuildEnvironment(const ExperimentConfig& config, std::uint64_t seed);

SimulationConfig MakeSimulationConfig(const ExperimentConfig& config,
                                      RuleKind rule, double beta,
                                      std::uint64_t seed);

struct CommandResult {
  bool diverged = false;
  nlohmann::json summary;
};

// Each command writes config.json plus its artifacts into `out_dir`; every
// file is written to a temporary name and renamed into place.
CommandResult CmdRun(const ExperimentConfig& config,
                     const std::filesystem::path& out_dir);
CommandResult CmdSweep(const ExperimentConfig& config,
                       const std::filesystem::path& out_dir);
CommandResult CmdAttack(const ExperimentConfig& config,
                        const std::filesystem::path& out_dir);
CommandResult CmdBudget(const ExperimentConfig& config,
                        const std::filesystem::path& out_dir);

struct AttackOutcome {
  ReconstructionResult result;
  DenseMatrix true_features;
};

// Runs `rule` to the configured target round with the attack batch size and
// reconstructs the victim's batch from its gamma.
AttackOutcome RunAttack(const ExperimentConfig& config, RuleKind rule,
                        double beta, std::uint64_t seed);

// Resolves --out, then the environment override, then the config.
std::filesystem::path ResolveOutputDir(const ExperimentConfig& config,
                                       const std::optional<std::string>& flag);

void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents);
std::string FormatDouble(double v);

double Mean(const std::vector<double>& v);
double SampleStd(const std::vector<double>& v);
double Median(std::vector<double> v);
// Spearman rank correlation with average ranks for ties; 0 when either
// side is constant.
double SpearmanCorrelation(const std::vector<double>& x,
                           const std::vector<double>& y);

}  // namespace dflsim

#endif  // DFLSIM_EXPERIMENT_H_
