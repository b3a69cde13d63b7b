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

// dflsim command line: run | sweep | attack | budget.
//
// Exit codes: 0 success, 1 validation error, 2 a run diverged (artifacts are
// still written), 3 I/O failure.

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dflsim/error.h"
#include "dflsim/experiment.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitIo = 3;

std::vector<std::string> SplitCsv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = s.find(',', start);
    const std::size_t end = comma == std::string::npos ? s.size() : comma;
    out.push_back(s.substr(start, end - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::vector<T> ParseList(const std::string& s, const char* flag) {
  std::vector<T> out;
  for (const std::string& item : SplitCsv(s)) {
    T v{};
    const auto [ptr, ec] =
        std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw dflsim::Error(dflsim::ErrorCode::kConfig,
                          std::string(flag) + ": cannot parse '" + item + "'");
    }
    out.push_back(v);
  }
  return out;
}

struct Overrides {
  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::string> seeds;
  std::optional<std::string> beta_list;
  std::optional<int> t_max;
  std::optional<std::size_t> victim;
  std::optional<int> target_round;
};

dflsim::ExperimentConfig Resolve(const Overrides& o) {
  dflsim::ExperimentConfig c = dflsim::LoadConfig(o.config_path);
  if (o.seeds) c.seeds = ParseList<std::uint64_t>(*o.seeds, "--seeds");
  if (o.beta_list) c.beta_list = ParseList<double>(*o.beta_list, "--beta-list");
  if (o.t_max) c.privacy.t_max = *o.t_max;
  if (o.victim) c.attack.victim = *o.victim;
  if (o.target_round) c.attack.attack.target_round = *o.target_round;
  c.Validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized learning aggregation simulator"};
  app.require_subcommand(1);
  Overrides o;

  using Command = dflsim::CommandResult (*)(const dflsim::ExperimentConfig&,
                                            const std::filesystem::path&);
  const std::vector<std::tuple<const char*, const char*, Command>> commands = {
      {"run", "Train every configured rule for each seed", &dflsim::CmdRun},
      {"sweep", "Sweep the noise scale over beta_list", &dflsim::CmdSweep},
      {"attack", "Gradient inversion against one victim", &dflsim::CmdAttack},
      {"budget", "Per-round privacy budgets", &dflsim::CmdBudget},
  };
  std::vector<std::pair<CLI::App*, Command>> subs;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", o.config_path, "JSON config file")
        ->required();
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--seeds", o.seeds, "Comma separated seed list");
    sub->add_option("--beta-list", o.beta_list, "Comma separated noise scales");
    sub->add_option("--t-max", o.t_max, "Last budget round");
    sub->add_option("--victim", o.victim, "Attacked client id");
    sub->add_option("--target-round", o.target_round, "Attacked round");
    subs.emplace_back(sub, fn);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    const dflsim::ExperimentConfig config = Resolve(o);
    const std::filesystem::path out_dir =
        dflsim::ResolveOutputDir(config, o.out);
    for (const auto& [sub, fn] : subs) {
      if (!sub->parsed()) continue;
      const dflsim::CommandResult result = fn(config, out_dir);
      std::printf("wrote %s\n", out_dir.string().c_str());
      if (result.diverged) {
        std::fprintf(stderr, "warning: at least one run diverged\n");
        return kExitDiverged;
      }
    }
    return kExitOk;
  } catch (const dflsim::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.code() == dflsim::ErrorCode::kIo ? kExitIo : kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  }
}
