// Copyright 2026 The wmdagger Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WMDAGGER_CONFIG_H_
#define WMDAGGER_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmdagger/envsim.h"
#include "wmdagger/policy.h"
#include "wmdagger/synthesis.h"
#include "wmdagger/worldmodel.h"

// One declarative tree holds every tunable of a run. Files are JSON; keys are
// validated against the schema below and unknown keys are rejected.

namespace wmdagger {

// Invalid configuration; `key` is the dotted path of the offending entry.
class ConfigError : public InvalidInput {
 public:
  ConfigError(std::string key, const std::string& message)
      : InvalidInput(key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

enum class WorldModelKind { kOracle, kFlow };

struct WorldModelSettings {
  WorldModelKind kind = WorldModelKind::kOracle;
  HallucinationConfig hallucination{0.5, 0.1, 0.5, 0};
  FlowConfig flow;
  int play_steps = 2000;
};

struct FilterSettings {
  bool enabled = true;
  int embedding_dim = 128;
};

struct EvalSettings {
  int trials = 100;
  int max_steps = 70;  // about twice a typical expert episode
};

struct ExperimentSettings {
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<int> n_demos = {1, 5};
  std::vector<std::string> methods = {"bc", "dmd_lite", "wm_dagger",
                                      "wm_dagger_no_dir", "wm_dagger_no_filter"};
  int ablation_n_demos = 5;
  std::vector<int> scaling_episodes = {300, 900, 1500, 3000};
  int scaling_n_demos = 5;
  double alpha = 0.05;
  int gate_trials = 100;
  double gate_min_success = 0.95;
  bool save_datasets = true;
  bool save_checkpoints = true;
};

struct RunConfig {
  TaskId task = TaskId::kPush;
  std::uint64_t seed = 0;
  int n_demos = 5;  // for the single-stage subcommands
  EnvConfig env = EnvConfig::for_task(TaskId::kPush);
  WorldModelSettings world_model;
  SynthesisConfig synthesis;
  FilterSettings filtering;
  PolicyConfig policy;
  EvalSettings eval;
  ExperimentSettings experiment;
};

RunConfig default_config(TaskId task = TaskId::kPush);

// Strict parse. Missing keys keep their defaults (task defaults when `task`
// is given). Throws ConfigError.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

// Applies `key=value` overrides (value parsed as JSON, else taken as a
// string) on top of `cfg`. Throws ConfigError for unknown keys.
RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::string>& overrides);

RunConfig load_config(const std::filesystem::path& path);

// Stable hash of the canonical JSON form.
std::uint64_t config_hash(const RunConfig& cfg);

// Cross-field checks (k >= 1, margins, trial counts...). Throws ConfigError.
void validate(const RunConfig& cfg);

}  // namespace wmdagger

#endif  // WMDAGGER_CONFIG_H_
