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

#include "dflsim/experiment.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <system_error>

#include "dflsim/error.h"
#include "dflsim/privacy.h"

namespace dflsim {
namespace {

using nlohmann::json;

// Reads the keys of one JSON object and rejects any it did not consume.
class ObjectReader {
 public:
  ObjectReader(const json& obj, std::string where)
      : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) Fail("expected an object");
  }

  template <typename T>
  void Read(const char* key, T& out) {
    const auto it = obj_.find(key);
    seen_.insert(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      Fail(std::string("field '") + key + "': " + e.what());
    }
  }

  const json* Child(const char* key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void Finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) Fail("unknown key '" + key + "'");
    }
  }

  [[noreturn]] void Fail(const std::string& msg) const {
    throw Error(ErrorCode::kConfig, where_ + ": " + msg);
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string TopologyName(TopologyKind k) {
  switch (k) {
    case TopologyKind::kFull: return "full";
    case TopologyKind::kRing: return "ring";
    case TopologyKind::kCustom: return "custom";
  }
  return "?";
}

TopologyKind ParseTopology(const std::string& s) {
  if (s == "full") return TopologyKind::kFull;
  if (s == "ring") return TopologyKind::kRing;
  if (s == "custom") return TopologyKind::kCustom;
  throw Error(ErrorCode::kConfig, "topology.kind: unknown '" + s + "'");
}

std::string ModelName(ModelKind k) {
  return k == ModelKind::kLogReg ? "logreg" : "mlp";
}

ModelKind ParseModel(const std::string& s) {
  if (s == "logreg") return ModelKind::kLogReg;
  if (s == "mlp") return ModelKind::kMlp;
  throw Error(ErrorCode::kConfig, "model.kind: unknown '" + s + "'");
}

std::string PartitionName(PartitionKind k) {
  switch (k) {
    case PartitionKind::kIid: return "iid";
    case PartitionKind::kQuantitySkew: return "quantity_skew";
    case PartitionKind::kLabelSkewDirichlet: return "label_skew_dirichlet";
    case PartitionKind::kLabelSkewCount: return "label_skew_count";
  }
  return "?";
}

PartitionKind ParsePartition(const std::string& s) {
  if (s == "iid") return PartitionKind::kIid;
  if (s == "quantity_skew") return PartitionKind::kQuantitySkew;
  if (s == "label_skew_dirichlet") return PartitionKind::kLabelSkewDirichlet;
  if (s == "label_skew_count") return PartitionKind::kLabelSkewCount;
  throw Error(ErrorCode::kConfig, "partition.kind: unknown '" + s + "'");
}

std::string RuleName(RuleKind k) {
  return std::string(AggregationRule{k, 0.0}.name());
}

AggregationRule MakeRule(RuleKind kind, double beta) {
  return kind == RuleKind::kDsgt ? AggregationRule::Dsgt()
                                 : AggregationRule{kind, beta};
}

void EnsureDir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo,
                "cannot create " + dir.string() + ": " + ec.message());
  }
}

void WriteJson(const std::filesystem::path& path, const json& doc) {
  WriteFileAtomic(path, doc.dump(2) + "\n");
}

double FinalAccuracy(const SimulationResult& r) {
  const RoundMetrics& last = r.history.empty() ? r.initial : r.history.back();
  return last.consensus_accuracy;
}

double MeanClientLoss(const SimulationResult& r) {
  const RoundMetrics& last = r.history.empty() ? r.initial : r.history.back();
  return Mean(last.loss);
}

std::vector<double> Finite(const std::vector<double>& v) {
  std::vector<double> out;
  std::copy_if(v.begin(), v.end(), std::back_inserter(out),
               [](double x) { return std::isfinite(x); });
  return out;
}

// JSON has no NaN; nlohmann writes null, which is what we want here.
json Stats(const std::vector<double>& accuracies) {
  const std::vector<double> ok = Finite(accuracies);
  return {{"accuracy_mean", ok.empty() ? NAN : Mean(ok)},
          {"accuracy_std", ok.empty() ? NAN : SampleStd(ok)},
          {"per_seed", accuracies},
          {"diverged_runs", accuracies.size() - ok.size()}};
}

void AppendMetricsRows(std::ostringstream& csv, std::uint64_t seed,
                       const AggregationRule& rule, const RoundMetrics& m) {
  for (std::size_t i = 0; i < m.loss.size(); ++i) {
    csv << seed << ',' << rule.name() << ',' << FormatDouble(rule.beta) << ','
        << m.round << ',' << i << ',' << FormatDouble(m.loss[i]) << ','
        << FormatDouble(m.accuracy[i]) << ','
        << FormatDouble(m.consensus_accuracy) << ','
        << FormatDouble(m.consensus_distance) << ','
        << FormatDouble(m.tracking_residual) << ','
        << FormatDouble(m.noise_diff_sum_norm) << ',' << (m.diverged ? 1 : 0)
        << '\n';
  }
}

std::uint64_t AttackSeed(const ExperimentConfig& config, std::uint64_t seed) {
  return StreamId(StreamPurpose::kAttack, config.attack.attack.init_seed, seed);
}

}  // namespace

void ExperimentConfig::Validate() const {
  auto fail = [](const std::string& msg) {
    throw Error(ErrorCode::kConfig, msg);
  };
  if (schema_version != kConfigSchemaVersion) {
    fail("schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  if (topology.kind != TopologyKind::kCustom && topology.n < 2) {
    fail("topology.n must be >= 2");
  }
  if (topology.kind == TopologyKind::kCustom && topology.edge_list.empty()) {
    fail("topology.edge_list is required for custom topologies");
  }
  if (rules.empty()) fail("rules must not be empty");
  if (!(beta > 0.0) || !std::isfinite(beta)) fail("beta must be positive");
  for (double b : beta_list) {
    if (!(b > 0.0) || !std::isfinite(b)) fail("beta_list entries must be > 0");
  }
  if (model_kind == ModelKind::kMlp && hidden < 1) {
    fail("model.hidden must be >= 1");
  }
  if (dataset.source == "synthetic") {
    if (dataset.n_classes < 2 || dataset.dim < 1 ||
        dataset.n_samples < static_cast<std::size_t>(dataset.n_classes)) {
      fail("dataset: need n_classes >= 2, dim >= 1, n_samples >= n_classes");
    }
  } else if (dataset.source == "csv") {
    if (dataset.csv_path.empty()) fail("dataset.csv_path is required");
  } else {
    fail("dataset.source must be synthetic or csv");
  }
  if (!(dataset.test_fraction > 0.0 && dataset.test_fraction < 1.0)) {
    fail("dataset.test_fraction must lie in (0, 1)");
  }
  if (partition.kind != PartitionKind::kIid &&
      partition.kind != PartitionKind::kLabelSkewCount &&
      !(partition.alpha > 0.0)) {
    fail("partition.alpha must be > 0");
  }
  if (partition.kind == PartitionKind::kLabelSkewCount && partition.k < 1) {
    fail("partition.k must be >= 1");
  }
  if (!(lambda > 0.0) || !std::isfinite(lambda)) fail("lambda must be > 0");
  if (rounds < 0) fail("rounds must be >= 0");
  if (local_epochs < 1) fail("local_epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (seeds.empty()) fail("seeds must not be empty");
  try {
    attack.attack.Validate();
  } catch (const Error& e) {
    fail(std::string("attack: ") + e.what());
  }
  if (attack.batch_size < 1) fail("attack.batch_size must be >= 1");
  if (topology.kind != TopologyKind::kCustom && attack.victim >= topology.n) {
    fail("attack.victim " + std::to_string(attack.victim) +
         " is not a client id (n = " + std::to_string(topology.n) + ")");
  }
  if (privacy.t_max < 0) fail("privacy.t_max must be >= 0");
  for (double v : privacy.delta_f) {
    if (!(v > 0.0)) fail("privacy.delta_f entries must be > 0");
  }
  for (double v : privacy.beta_per_client) {
    if (!(v > 0.0)) fail("privacy.beta_per_client entries must be > 0");
  }
}

ExperimentConfig ConfigFromJson(const json& doc) {
  ExperimentConfig c;
  ObjectReader root(doc, "config");
  int version = -1;
  root.Read("schema_version", version);
  if (version != kConfigSchemaVersion) {
    root.Fail("schema_version must be " + std::to_string(kConfigSchemaVersion));
  }
  c.schema_version = version;

  if (const json* t = root.Child("topology")) {
    ObjectReader r(*t, "topology");
    std::string kind = TopologyName(c.topology.kind);
    r.Read("kind", kind);
    c.topology.kind = ParseTopology(kind);
    r.Read("n", c.topology.n);
    r.Read("edge_list", c.topology.edge_list);
    r.Finish();
  }
  if (const json* rules = root.Child("rules")) {
    if (!rules->is_array()) root.Fail("rules must be an array");
    c.rules.clear();
    for (const auto& name : *rules) {
      if (!name.is_string()) root.Fail("rules entries must be strings");
      c.rules.push_back(ParseRuleKind(name.get<std::string>()));
    }
  }
  root.Read("beta", c.beta);
  root.Read("beta_list", c.beta_list);
  if (const json* m = root.Child("model")) {
    ObjectReader r(*m, "model");
    std::string kind = ModelName(c.model_kind);
    r.Read("kind", kind);
    c.model_kind = ParseModel(kind);
    r.Read("hidden", c.hidden);
    r.Finish();
  }
  if (const json* d = root.Child("dataset")) {
    ObjectReader r(*d, "dataset");
    r.Read("source", c.dataset.source);
    r.Read("n_classes", c.dataset.n_classes);
    r.Read("dim", c.dataset.dim);
    r.Read("n_samples", c.dataset.n_samples);
    r.Read("separation", c.dataset.separation);
    r.Read("normalize", c.dataset.normalize);
    r.Read("csv_path", c.dataset.csv_path);
    r.Read("label_column", c.dataset.label_column);
    r.Read("test_fraction", c.dataset.test_fraction);
    r.Finish();
  }
  if (const json* p = root.Child("partition")) {
    ObjectReader r(*p, "partition");
    std::string kind = PartitionName(c.partition.kind);
    r.Read("kind", kind);
    c.partition.kind = ParsePartition(kind);
    r.Read("alpha", c.partition.alpha);
    r.Read("k", c.partition.k);
    r.Finish();
  }
  root.Read("lambda", c.lambda);
  root.Read("rounds", c.rounds);
  root.Read("local_epochs", c.local_epochs);
  root.Read("batch_size", c.batch_size);
  root.Read("seeds", c.seeds);
  root.Read("sweep_attack", c.sweep_attack);
  if (const json* a = root.Child("attack")) {
    ObjectReader r(*a, "attack");
    r.Read("iterations", c.attack.attack.iterations);
    r.Read("step_size", c.attack.attack.step_size);
    r.Read("restarts", c.attack.attack.restarts);
    r.Read("target_round", c.attack.attack.target_round);
    r.Read("init_seed", c.attack.attack.init_seed);
    r.Read("max_halvings", c.attack.attack.max_halvings);
    r.Read("fd_step", c.attack.attack.fd_step);
    r.Read("victim", c.attack.victim);
    r.Read("batch_size", c.attack.batch_size);
    r.Finish();
  }
  if (const json* p = root.Child("privacy")) {
    ObjectReader r(*p, "privacy");
    r.Read("delta_f", c.privacy.delta_f);
    r.Read("beta_per_client", c.privacy.beta_per_client);
    r.Read("t_max", c.privacy.t_max);
    r.Finish();
  }
  root.Read("output_dir", c.output_dir);
  root.Finish();
  c.Validate();
  return c;
}

json ConfigToJson(const ExperimentConfig& c) {
  json rules = json::array();
  for (RuleKind k : c.rules) rules.push_back(RuleName(k));
  return {
      {"schema_version", c.schema_version},
      {"topology",
       {{"kind", TopologyName(c.topology.kind)},
        {"n", c.topology.n},
        {"edge_list", c.topology.edge_list}}},
      {"rules", rules},
      {"beta", c.beta},
      {"beta_list", c.beta_list},
      {"model", {{"kind", ModelName(c.model_kind)}, {"hidden", c.hidden}}},
      {"dataset",
       {{"source", c.dataset.source},
        {"n_classes", c.dataset.n_classes},
        {"dim", c.dataset.dim},
        {"n_samples", c.dataset.n_samples},
        {"separation", c.dataset.separation},
        {"normalize", c.dataset.normalize},
        {"csv_path", c.dataset.csv_path},
        {"label_column", c.dataset.label_column},
        {"test_fraction", c.dataset.test_fraction}}},
      {"partition",
       {{"kind", PartitionName(c.partition.kind)},
        {"alpha", c.partition.alpha},
        {"k", c.partition.k}}},
      {"lambda", c.lambda},
      {"rounds", c.rounds},
      {"local_epochs", c.local_epochs},
      {"batch_size", c.batch_size},
      {"seeds", c.seeds},
      {"sweep_attack", c.sweep_attack},
      {"attack",
       {{"iterations", c.attack.attack.iterations},
        {"step_size", c.attack.attack.step_size},
        {"restarts", c.attack.attack.restarts},
        {"target_round", c.attack.attack.target_round},
        {"init_seed", c.attack.attack.init_seed},
        {"max_halvings", c.attack.attack.max_halvings},
        {"fd_step", c.attack.attack.fd_step},
        {"victim", c.attack.victim},
        {"batch_size", c.attack.batch_size}}},
      {"privacy",
       {{"delta_f", c.privacy.delta_f},
        {"beta_per_client", c.privacy.beta_per_client},
        {"t_max", c.privacy.t_max}}},
      {"output_dir", c.output_dir},
  };
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig,
                "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return ConfigFromJson(doc);
}

Environment BuildEnvironment(const ExperimentConfig& config,
                             std::uint64_t seed) {
  config.Validate();
  Environment env;
  env.topology = config.topology.kind == TopologyKind::kCustom
                     ? LoadEdgeListJson(config.topology.edge_list)
                     : BuildTopology(config.topology.kind, config.topology.n);
  env.w = SinkhornKnopp(env.topology);

  Dataset full;
  if (config.dataset.source == "csv") {
    full = LoadCsv(config.dataset.csv_path, config.dataset.label_column);
  } else {
    full = GenerateSynthetic(config.dataset.n_classes, config.dataset.dim,
                             config.dataset.n_samples,
                             config.dataset.separation, seed);
    if (config.dataset.normalize) full = MinMaxNormalize(full);
  }
  auto [train, test] = TrainTestSplit(full, config.dataset.test_fraction, seed);
  PartitionSpec spec = config.partition;
  spec.seed = seed;
  env.shards = Partition(train, spec, env.topology.size());
  env.test = std::move(test);
  env.model.kind = config.model_kind;
  env.model.dim = full.dim();
  env.model.n_classes = static_cast<std::size_t>(full.n_classes);
  env.model.hidden = config.model_kind == ModelKind::kMlp ? config.hidden : 0;
  return env;
}

SimulationConfig MakeSimulationConfig(const ExperimentConfig& config,
                                      RuleKind rule, double beta,
                                      std::uint64_t seed) {
  SimulationConfig sim;
  sim.rule = MakeRule(rule, beta);
  sim.lambda = config.lambda;
  sim.rounds = config.rounds;
  sim.local_epochs = config.local_epochs;
  sim.batch_size = config.batch_size;
  sim.seed = seed;
  return sim;
}

CommandResult CmdRun(const ExperimentConfig& config,
                     const std::filesystem::path& out_dir) {
  config.Validate();
  EnsureDir(out_dir);
  std::ostringstream csv;
  csv << "seed,rule,beta,round,client,loss,accuracy,consensus_accuracy,"
         "consensus_distance,tracking_residual,noise_diff_sum_norm,diverged\n";
  std::vector<std::vector<double>> accuracy(config.rules.size());
  bool diverged = false;
  for (std::uint64_t seed : config.seeds) {
    const Environment env = BuildEnvironment(config, seed);
    for (std::size_t r = 0; r < config.rules.size(); ++r) {
      SimulationConfig sim =
          MakeSimulationConfig(config, config.rules[r], config.beta, seed);
      sim.model = env.model;
      const SimulationResult result =
          RunSimulation(sim, env.topology, env.w, env.shards, &env.test);
      AppendMetricsRows(csv, seed, sim.rule, result.initial);
      for (const RoundMetrics& m : result.history) {
        AppendMetricsRows(csv, seed, sim.rule, m);
      }
      diverged = diverged || result.final_state.diverged;
      accuracy[r].push_back(FinalAccuracy(result));
    }
  }

  json rules = json::object();
  std::optional<double> dsgt_mean;
  for (std::size_t r = 0; r < config.rules.size(); ++r) {
    if (config.rules[r] == RuleKind::kDsgt) {
      const auto ok = Finite(accuracy[r]);
      if (!ok.empty()) dsgt_mean = Mean(ok);
    }
  }
  for (std::size_t r = 0; r < config.rules.size(); ++r) {
    json stats = Stats(accuracy[r]);
    if (dsgt_mean && stats["accuracy_mean"].is_number()) {
      stats["loss_vs_dsgt"] = *dsgt_mean - stats["accuracy_mean"].get<double>();
    }
    rules[RuleName(config.rules[r])] = std::move(stats);
  }
  CommandResult out;
  out.diverged = diverged;
  out.summary = {{"command", "run"},
                 {"config", ConfigToJson(config)},
                 {"seeds", config.seeds},
                 {"rules", rules},
                 {"diverged", diverged}};
  WriteJson(out_dir / "config.json", ConfigToJson(config));
  WriteFileAtomic(out_dir / "metrics.csv", csv.str());
  WriteJson(out_dir / "summary.json", out.summary);
  return out;
}

AttackOutcome RunAttack(const ExperimentConfig& config, RuleKind rule,
                        double beta, std::uint64_t seed) {
  const Environment env = BuildEnvironment(config, seed);
  const std::size_t victim = config.attack.victim;
  if (victim >= env.topology.size()) {
    throw Error(ErrorCode::kConfig, "victim " + std::to_string(victim) +
                                        " is not a client id");
  }
  SimulationState state =
      InitClients(MakeRule(rule, beta), env.model, env.shards, env.topology,
                  env.w, seed, config.attack.batch_size);
  for (int t = 0; t < config.attack.attack.target_round; ++t) {
    DsgtRound(state, config.lambda, config.local_epochs);
  }
  if (state.diverged) {
    throw Error(ErrorCode::kNumeric, "protocol diverged before the attacked "
                                     "round");
  }
  const ClientState& v = state.clients[victim];
  AttackOutcome outcome;
  outcome.true_features = MakeBatch(v.shard, v.batch_indices).features;
  AttackConfig cfg = config.attack.attack;
  cfg.init_seed = AttackSeed(config, seed);
  outcome.result =
      DlgAttack(env.model, v.theta, v.gamma,
                {outcome.true_features.rows(), outcome.true_features.cols()},
                outcome.true_features, cfg);
  return outcome;
}

CommandResult CmdSweep(const ExperimentConfig& config,
                       const std::filesystem::path& out_dir) {
  config.Validate();
  if (config.beta_list.empty()) {
    throw Error(ErrorCode::kConfig, "beta_list must not be empty");
  }
  EnsureDir(out_dir);
  std::ostringstream csv;
  csv << "beta,rule,seed,accuracy,mean_loss,diverged,attack_mse\n";
  const std::size_t nb = config.beta_list.size();
  const std::size_t nr = config.rules.size();
  // [beta][rule] -> per-seed values
  std::vector<std::vector<std::vector<double>>> acc(
      nb, std::vector<std::vector<double>>(nr));
  auto mse = acc;
  bool diverged = false;
  for (std::size_t b = 0; b < nb; ++b) {
    const double beta = config.beta_list[b];
    for (std::uint64_t seed : config.seeds) {
      const Environment env = BuildEnvironment(config, seed);
      for (std::size_t r = 0; r < nr; ++r) {
        SimulationConfig sim =
            MakeSimulationConfig(config, config.rules[r], beta, seed);
        sim.model = env.model;
        const SimulationResult result =
            RunSimulation(sim, env.topology, env.w, env.shards, &env.test);
        diverged = diverged || result.final_state.diverged;
        double attack_mse = NAN;
        if (config.sweep_attack) {
          try {
            attack_mse = RunAttack(config, config.rules[r], beta, seed)
                             .result.mse;
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kNumeric) throw;
          }
        }
        acc[b][r].push_back(FinalAccuracy(result));
        mse[b][r].push_back(attack_mse);
        csv << FormatDouble(beta) << ',' << sim.rule.name() << ',' << seed
            << ',' << FormatDouble(FinalAccuracy(result)) << ','
            << FormatDouble(MeanClientLoss(result)) << ','
            << (result.final_state.diverged ? 1 : 0) << ','
            << FormatDouble(attack_mse) << '\n';
      }
    }
  }

  json points = json::array();
  json trends = json::object();
  for (std::size_t r = 0; r < nr; ++r) {
    std::vector<double> betas, means, mse_medians;
    for (std::size_t b = 0; b < nb; ++b) {
      json point = Stats(acc[b][r]);
      point["beta"] = config.beta_list[b];
      point["rule"] = RuleName(config.rules[r]);
      const auto finite_mse = Finite(mse[b][r]);
      point["attack_mse_median"] =
          finite_mse.empty() ? NAN : Median(finite_mse);
      points.push_back(point);
      const auto ok = Finite(acc[b][r]);
      if (!ok.empty()) {
        betas.push_back(config.beta_list[b]);
        means.push_back(Mean(ok));
      }
      if (!finite_mse.empty()) mse_medians.push_back(Median(finite_mse));
    }
    json trend;
    if (betas.size() >= 2) {
      trend["accuracy_spearman"] = SpearmanCorrelation(betas, means);
      trend["accuracy_spread"] =
          *std::max_element(means.begin(), means.end()) -
          *std::min_element(means.begin(), means.end());
    }
    if (mse_medians.size() == nb && nb >= 2) {
      trend["attack_mse_spearman"] =
          SpearmanCorrelation(config.beta_list, mse_medians);
    }
    trends[RuleName(config.rules[r])] = trend;
  }
  CommandResult out;
  out.diverged = diverged;
  out.summary = {{"command", "sweep"}, {"config", ConfigToJson(config)},
                 {"seeds", config.seeds}, {"points", points},
                 {"trends", trends},      {"diverged", diverged}};
  WriteJson(out_dir / "config.json", ConfigToJson(config));
  WriteFileAtomic(out_dir / "sweep.csv", csv.str());
  WriteJson(out_dir / "summary.json", out.summary);
  return out;
}

CommandResult CmdAttack(const ExperimentConfig& config,
                        const std::filesystem::path& out_dir) {
  config.Validate();
  EnsureDir(out_dir);
  std::ostringstream csv;
  json runs = json::array();
  json medians = json::object();
  bool header_written = false;
  for (RuleKind rule : config.rules) {
    std::vector<double> mses;
    for (std::uint64_t seed : config.seeds) {
      const AttackOutcome o = RunAttack(config, rule, config.beta, seed);
      const ReconstructionResult& res = o.result;
      if (!header_written) {
        csv << "rule,seed,sample,source";
        for (std::size_t j = 0; j < o.true_features.cols(); ++j) {
          csv << ",f" << j;
        }
        csv << '\n';
        header_written = true;
      }
      for (std::size_t s = 0; s < o.true_features.rows(); ++s) {
        for (const auto& [name, m] :
             {std::pair<const char*, const DenseMatrix*>{"true",
                                                         &o.true_features},
              {"reconstructed", &res.x_hat}}) {
          csv << RuleName(rule) << ',' << seed << ',' << s << ',' << name;
          for (double v : m->row(s)) csv << ',' << FormatDouble(v);
          csv << '\n';
        }
      }
      mses.push_back(res.mse);
      runs.push_back({{"rule", RuleName(rule)},
                      {"seed", seed},
                      {"mse", res.mse},
                      {"objective", res.objective},
                      {"grad_match_residual", res.grad_match_residual},
                      {"iterations_used", res.iterations_used},
                      {"best_restart", res.best_restart},
                      {"aborted_restarts", res.aborted_restarts}});
    }
    medians[RuleName(rule)] = Median(mses);
  }
  CommandResult out;
  out.summary = {{"command", "attack"},
                 {"config", ConfigToJson(config)},
                 {"seeds", config.seeds},
                 {"victim", config.attack.victim},
                 {"target_round", config.attack.attack.target_round},
                 {"beta", config.beta},
                 {"runs", runs},
                 {"median_mse", medians}};
  WriteJson(out_dir / "config.json", ConfigToJson(config));
  WriteFileAtomic(out_dir / "reconstruction.csv", csv.str());
  WriteJson(out_dir / "attack.json", out.summary);
  return out;
}

CommandResult CmdBudget(const ExperimentConfig& config,
                        const std::filesystem::path& out_dir) {
  config.Validate();
  EnsureDir(out_dir);
  const std::uint64_t seed = config.seeds.front();
  const Environment env = BuildEnvironment(config, seed);
  const std::size_t n = env.topology.size();

  PrivacyParams params;
  if (config.privacy.beta_per_client.empty()) {
    params.beta.assign(n, config.beta);
  } else if (config.privacy.beta_per_client.size() == n) {
    params.beta = config.privacy.beta_per_client;
  } else {
    throw Error(ErrorCode::kConfig,
                "privacy.beta_per_client needs one entry per client");
  }
  std::string source = "config";
  if (config.privacy.delta_f.empty()) {
    source = "empirical";
    for (std::size_t i = 0; i < n; ++i) {
      params.delta_f.push_back(EmpiricalSensitivity(
          env.model, InitParams(env.model, seed, i), env.shards[i]));
    }
  } else if (config.privacy.delta_f.size() == 1) {
    params.delta_f.assign(n, config.privacy.delta_f.front());
  } else if (config.privacy.delta_f.size() == n) {
    params.delta_f = config.privacy.delta_f;
  } else {
    throw Error(ErrorCode::kConfig,
                "privacy.delta_f needs one entry or one per client");
  }

  const BudgetReport report =
      ComputeBudgetReport(params, env.w, config.privacy.t_max);
  std::ostringstream csv;
  csv << "round,client,epsilon_lppa,epsilon_dp,ratio\n";
  for (int t = 0; t <= config.privacy.t_max; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double lppa = report.epsilon_lppa[t][i];
      const double dp = report.epsilon_dp[t][i];
      csv << t << ',' << i << ',' << FormatDouble(lppa) << ','
          << FormatDouble(dp) << ',' << FormatDouble(dp / lppa) << '\n';
    }
  }
  CommandResult out;
  out.summary = {{"command", "budget"},
                 {"config", ConfigToJson(config)},
                 {"seeds", config.seeds},
                 {"t_max", config.privacy.t_max},
                 {"beta", params.beta},
                 {"delta_f", params.delta_f},
                 {"delta_f_source", source}};
  WriteJson(out_dir / "config.json", ConfigToJson(config));
  WriteFileAtomic(out_dir / "budgets.csv", csv.str());
  WriteJson(out_dir / "budget.json", out.summary);
  return out;
}

std::filesystem::path ResolveOutputDir(const ExperimentConfig& config,
                                       const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
  return config.output_dir;
}

void WriteFileAtomic(const std::filesystem::path& path,
                     std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::kIo, "cannot move " + tmp.string() + " into place");
  }
}

std::string FormatDouble(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double Mean(const std::vector<double>& v) {
  if (v.empty()) return NAN;
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

double SampleStd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = Mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double Median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

namespace {

std::vector<double> AverageRanks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double SpearmanCorrelation(const std::vector<double>& x,
                           const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::kParameter, "Spearman needs two equal-length series");
  }
  const std::vector<double> rx = AverageRanks(x);
  const std::vector<double> ry = AverageRanks(y);
  const double mx = Mean(rx);
  const double my = Mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dflsim
