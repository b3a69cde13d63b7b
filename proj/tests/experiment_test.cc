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

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dflsim/error.h"
#include "dflsim/experiment.h"

namespace dflsim {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ReadFile(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> Lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

class ExperimentTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dflsim_exp_" +
            std::string(::testing::UnitTest::GetInstance()
                            ->current_test_info()
                            ->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  static ExperimentConfig Small() {
    ExperimentConfig c;
    c.dataset.n_samples = 200;
    c.rounds = 5;
    c.seeds = {0, 1};
    return c;
  }

  fs::path dir_;
};

void ExpectConfigError(const json& doc) {
  try {
    ConfigFromJson(doc);
    FAIL() << doc.dump();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig) << e.what();
  }
}

TEST(ConfigTest, MinimalConfigUsesDefaults) {
  const ExperimentConfig c = ConfigFromJson(json{{"schema_version", 1}});
  EXPECT_EQ(c.topology.n, 5u);
  EXPECT_EQ(c.rounds, 50);
  EXPECT_EQ(c.lambda, 0.05);
  EXPECT_EQ(c.rules.size(), 3u);
}

TEST(ConfigTest, UnknownKeysAreErrors) {
  ExpectConfigError({{"schema_version", 1}, {"lamda", 0.1}});
  ExpectConfigError({{"schema_version", 1}, {"topology", {{"size", 3}}}});
  ExpectConfigError({{"schema_version", 1}, {"attack", {{"iters", 3}}}});
}

TEST(ConfigTest, SchemaVersionIsRequired) {
  ExpectConfigError(json::object());
  ExpectConfigError({{"schema_version", 2}});
}

TEST(ConfigTest, TypeAndRangeErrors) {
  ExpectConfigError({{"schema_version", 1}, {"lambda", "big"}});
  ExpectConfigError({{"schema_version", 1}, {"lambda", -0.1}});
  ExpectConfigError({{"schema_version", 1}, {"beta", 0.0}});
  ExpectConfigError({{"schema_version", 1}, {"rules", {"fedavg"}}});
  ExpectConfigError({{"schema_version", 1}, {"seeds", json::array()}});
  ExpectConfigError(
      {{"schema_version", 1}, {"topology", {{"kind", "star"}}}});
  ExpectConfigError({{"schema_version", 1}, {"attack", {{"victim", 5}}}});
  ExpectConfigError(
      {{"schema_version", 1}, {"dataset", {{"test_fraction", 1.0}}}});
}

TEST(ConfigTest, EchoRoundTrips) {
  ExperimentConfig c;
  c.beta = 0.1 + 0.2;  // not exactly representable in short decimal
  c.lambda = 1.0 / 3.0;
  c.model_kind = ModelKind::kMlp;
  c.partition.kind = PartitionKind::kLabelSkewCount;
  c.rules = {RuleKind::kLppa};
  c.attack.attack.target_round = 3;
  const json echo = ConfigToJson(c);
  const ExperimentConfig back = ConfigFromJson(json::parse(echo.dump()));
  EXPECT_EQ(ConfigToJson(back).dump(), echo.dump());
  EXPECT_EQ(back.beta, c.beta);
  EXPECT_EQ(back.lambda, c.lambda);
}

TEST(HelpersTest, Statistics) {
  EXPECT_EQ(Median({3, 1, 2}), 2.0);
  EXPECT_EQ(Median({4, 1, 2, 3}), 2.5);
  EXPECT_EQ(Mean({1, 2, 3}), 2.0);
  EXPECT_NEAR(SampleStd({1, 2, 3}), 1.0, 1e-15);
  EXPECT_NEAR(SpearmanCorrelation({1, 2, 3}, {9, 5, 1}), -1.0, 1e-15);
  EXPECT_NEAR(SpearmanCorrelation({1, 2, 3}, {1, 5, 9}), 1.0, 1e-15);
  EXPECT_EQ(SpearmanCorrelation({1, 2, 3}, {4, 4, 4}), 0.0);
  // Ties get average ranks: y ranks (1.5, 1.5, 3).
  EXPECT_NEAR(SpearmanCorrelation({1, 2, 3}, {0, 0, 1}), std::sqrt(0.75),
              1e-15);
  EXPECT_EQ(FormatDouble(0.1), "0.10000000000000001");
  EXPECT_EQ(FormatDouble(NAN), "nan");
  EXPECT_EQ(std::stod(FormatDouble(1.0 / 3.0)), 1.0 / 3.0);
}

TEST_F(ExperimentTest, OutputDirPrecedence) {
  ExperimentConfig c;
  c.output_dir = "from_config";
  unsetenv(kOutputDirEnv);
  EXPECT_EQ(ResolveOutputDir(c, std::nullopt), fs::path("from_config"));
  setenv(kOutputDirEnv, "from_env", 1);
  EXPECT_EQ(ResolveOutputDir(c, std::nullopt), fs::path("from_env"));
  EXPECT_EQ(ResolveOutputDir(c, "from_flag"), fs::path("from_flag"));
  unsetenv(kOutputDirEnv);
}

TEST_F(ExperimentTest, AtomicWriteLeavesNoTemporary) {
  WriteFileAtomic(dir_ / "a.csv", "x\n1\n");
  EXPECT_EQ(ReadFile(dir_ / "a.csv"), "x\n1\n");
  EXPECT_FALSE(fs::exists(dir_ / "a.csv.tmp"));
  EXPECT_THROW(WriteFileAtomic(dir_ / "missing" / "b.csv", "x"), Error);
  EXPECT_FALSE(fs::exists(dir_ / "missing" / "b.csv"));
}

TEST_F(ExperimentTest, RunWritesArtifactsAndReproducesFromEcho) {
  const ExperimentConfig c = Small();
  const CommandResult r = CmdRun(c, dir_ / "a");
  EXPECT_FALSE(r.diverged);
  const auto lines = Lines(ReadFile(dir_ / "a" / "metrics.csv"));
  // header + seeds * rules * (rounds + 1) * clients
  EXPECT_EQ(lines.size(), 1u + 2 * 3 * 6 * 5);
  EXPECT_EQ(lines[0],
            "seed,rule,beta,round,client,loss,accuracy,consensus_accuracy,"
            "consensus_distance,tracking_residual,noise_diff_sum_norm,"
            "diverged");
  const json summary = json::parse(ReadFile(dir_ / "a" / "summary.json"));
  EXPECT_EQ(summary["config"], ConfigToJson(c));
  EXPECT_EQ(summary["seeds"], json(c.seeds));
  EXPECT_TRUE(summary["rules"]["lppa"].contains("loss_vs_dsgt"));

  const ExperimentConfig echo = LoadConfig(dir_ / "a" / "config.json");
  CmdRun(echo, dir_ / "b");
  EXPECT_EQ(ReadFile(dir_ / "a" / "metrics.csv"),
            ReadFile(dir_ / "b" / "metrics.csv"));
}

TEST_F(ExperimentTest, ZeroRoundsWritesOnlyInitialRows) {
  ExperimentConfig c = Small();
  c.rounds = 0;
  c.seeds = {3};
  c.rules = {RuleKind::kDsgt};
  CmdRun(c, dir_);
  const auto lines = Lines(ReadFile(dir_ / "metrics.csv"));
  ASSERT_EQ(lines.size(), 1u + 5);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    EXPECT_EQ(lines[i].rfind("3,dsgt,0,0,", 0), 0u) << lines[i];
  }
}

TEST_F(ExperimentTest, LppaMatchesDsgtInSummary) {
  ExperimentConfig c;
  c.rules = {RuleKind::kDsgt, RuleKind::kLppa};
  c.beta = 0.5;
  const json s = CmdRun(c, dir_).summary;
  EXPECT_LE(std::abs(s["rules"]["lppa"]["loss_vs_dsgt"].get<double>()),
            0.005);
}

TEST_F(ExperimentTest, DivergedRunStillWritesFlaggedRows) {
  ExperimentConfig c = Small();
  c.rules = {RuleKind::kDp};
  c.seeds = {0};
  c.lambda = 1e308;
  const CommandResult r = CmdRun(c, dir_);
  EXPECT_TRUE(r.diverged);
  const auto lines = Lines(ReadFile(dir_ / "metrics.csv"));
  EXPECT_EQ(lines.size(), 1u + 6 * 5);
  EXPECT_EQ(lines.back().back(), '1');
  EXPECT_EQ(lines[1].back(), '0');
  EXPECT_EQ(CmdRun(c, dir_).summary["rules"]["dp"]["diverged_runs"], 1);
}

TEST_F(ExperimentTest, SweepWritesOneRowPerPoint) {
  ExperimentConfig c = Small();
  c.sweep_attack = false;
  const json s = CmdSweep(c, dir_).summary;
  const auto lines = Lines(ReadFile(dir_ / "sweep.csv"));
  EXPECT_EQ(lines.size(), 1u + 3 * 2 * 3);
  EXPECT_EQ(lines[0], "beta,rule,seed,accuracy,mean_loss,diverged,attack_mse");
  EXPECT_EQ(s["points"].size(), 9u);
  EXPECT_TRUE(s["trends"]["dp"].contains("accuracy_spearman"));
  EXPECT_EQ(s["config"], ConfigToJson(c));
}

TEST_F(ExperimentTest, AttackRecordsVictimAndRound) {
  ExperimentConfig c = Small();
  c.dataset.normalize = true;
  c.attack.attack.target_round = 2;
  c.attack.attack.iterations = 20;
  c.attack.victim = 3;
  c.rules = {RuleKind::kDsgt, RuleKind::kLppa};
  const json s = CmdAttack(c, dir_).summary;
  EXPECT_EQ(s["target_round"], 2);
  EXPECT_EQ(s["victim"], 3);
  EXPECT_EQ(s["runs"].size(), 4u);
  const json on_disk = json::parse(ReadFile(dir_ / "attack.json"));
  EXPECT_EQ(on_disk, s);
  const auto lines = Lines(ReadFile(dir_ / "reconstruction.csv"));
  EXPECT_EQ(lines.size(), 1u + 2 * 2 * 2);
}

TEST_F(ExperimentTest, AttackRejectsUnknownVictim) {
  ExperimentConfig c = Small();
  c.attack.victim = 5;
  try {
    CmdAttack(c, dir_);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST_F(ExperimentTest, DsgtVictimLeaksMoreThanLppa) {
  ExperimentConfig c;
  c.dataset.normalize = true;
  c.beta = 0.5;
  c.rules = {RuleKind::kDsgt, RuleKind::kLppa};
  const json s = CmdAttack(c, dir_).summary;
  EXPECT_LT(s["median_mse"]["dsgt"].get<double>(),
            s["median_mse"]["lppa"].get<double>());
}

TEST_F(ExperimentTest, BudgetColumnsAndSources) {
  ExperimentConfig c = Small();
  c.privacy.t_max = 4;
  c.privacy.delta_f = {2.0};
  c.beta = 0.25;
  const json s = CmdBudget(c, dir_).summary;
  EXPECT_EQ(s["delta_f_source"], "config");
  const auto lines = Lines(ReadFile(dir_ / "budgets.csv"));
  ASSERT_EQ(lines.size(), 1u + 5 * 5);
  EXPECT_EQ(lines[0], "round,client,epsilon_lppa,epsilon_dp,ratio");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<double> v;
    std::istringstream in(lines[i]);
    for (std::string cell; std::getline(in, cell, ',');) {
      v.push_back(std::stod(cell));
    }
    EXPECT_NEAR(v[4], std::sqrt(2.0), 1e-12);
    // Uniform beta and doubly stochastic W: constant Delta f / beta.
    EXPECT_NEAR(v[3], 2.0 / 0.25, 1e-9);
  }
  c.privacy.delta_f.clear();
  EXPECT_EQ(CmdBudget(c, dir_).summary["delta_f_source"], "empirical");
  c.privacy.delta_f = {1, 2};
  EXPECT_THROW(CmdBudget(c, dir_), Error);
}

int RunCli(const std::string& args) {
  const std::string cmd =
      std::string(DFLSIM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_F(ExperimentTest, CliExitCodes) {
  const fs::path good = dir_ / "good.json";
  std::ofstream(good) << R"({"schema_version": 1, "rounds": 2,
      "dataset": {"n_samples": 100}, "seeds": [0]})";
  const fs::path bad = dir_ / "bad.json";
  std::ofstream(bad) << R"({"schema_version": 1, "lamda": 0.1})";
  const fs::path boom = dir_ / "boom.json";
  std::ofstream(boom) << R"({"schema_version": 1, "lambda": 1e308,
      "rounds": 3, "rules": ["dp"], "seeds": [0]})";

  const std::string out = " --out " + (dir_ / "out").string();
  EXPECT_EQ(RunCli("run --config " + good.string() + out), 0);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "metrics.csv"));
  EXPECT_EQ(RunCli("budget --config " + good.string() + out +
                   " --t-max 3 --seeds 4,5"),
            0);
  const json budget = json::parse(ReadFile(dir_ / "out" / "budget.json"));
  EXPECT_EQ(budget["config"]["privacy"]["t_max"], 3);
  EXPECT_EQ(budget["seeds"], json({4, 5}));
  EXPECT_EQ(RunCli("run --config " + bad.string() + out), 1);
  EXPECT_EQ(RunCli("attack --config " + good.string() + out + " --victim 9"),
            1);
  EXPECT_EQ(RunCli("sweep --config " + good.string() + out +
                   " --beta-list 0.1,x"),
            1);
  EXPECT_EQ(RunCli("frobnicate"), 1);
  EXPECT_EQ(RunCli("run --config " + (dir_ / "none.json").string() + out), 3);
  EXPECT_EQ(RunCli("run --config " + boom.string() + " --out " +
                   (dir_ / "boom").string()),
            2);
  EXPECT_TRUE(fs::exists(dir_ / "boom" / "metrics.csv"));
}

}  // namespace
}  // namespace dflsim
