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

#ifndef WMDAGGER_HARNESS_H_
#define WMDAGGER_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wmdagger/config.h"
#include "wmdagger/envsim.h"
#include "wmdagger/policy.h"

// Experiment orchestration: demonstrations, synthesis, filtering, policy
// training per method, seeded evaluation, statistics and report files.

namespace wmdagger {

struct MethodSpec {
  std::string name;  // bc | dmd_lite | wm_dagger | wm_dagger_no_dir | wm_dagger_no_filter
  int n_demos = 1;
  int episodes = 0;  // synthesized episodes (0 for bc)
  WorldModelKind wm = WorldModelKind::kOracle;
  HallucinationConfig hallucination;
  std::vector<std::uint64_t> seeds;
};

// Every arm the experiment settings ask for, in a fixed order.
std::vector<MethodSpec> plan_methods(const RunConfig& cfg);

// n successful scripted demonstrations. Attempt i draws its scene from
// stream i, so the first n of a larger collection equal a collection of n.
std::vector<Trajectory> collect_demos(const EnvConfig& env, int n,
                                      std::uint64_t seed);

// Fraction of `trials` seeded scenes the scripted expert solves.
double expert_success_rate(const EnvConfig& env, int trials, std::uint64_t seed);

struct EvalResult {
  int successes = 0;
  int trials = 0;
  double mean_steps = 0.0;
  std::vector<bool> outcomes;
};

// Rollouts from `trials` scenes drawn from the evaluation stream of `seed`
// (disjoint from the demonstration stream).
EvalResult evaluate_policy(const PolicyNet& net, const EnvConfig& env,
                           int trials, int max_steps, int stride,
                           std::uint64_t seed);

// Single-frame corrective pairs: for each sample a random pivot, one clean
// render at a pose displaced from it and the one action leading back. The
// pivot is left unset so chunk targets repeat that action.
std::vector<Trajectory> dmd_lite_augment(std::span<const Trajectory> demos,
                                         const EnvConfig& env,
                                         const SynthesisConfig& cfg,
                                         int samples, std::uint64_t seed);

// --- statistics -------------------------------------------------------------

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
Interval wilson_interval(int successes, int trials, double z = 1.959963984540054);

struct ProportionTest {
  double z = 0.0;
  double p_value = 1.0;  // one-sided, H1: p_a > p_b
};
ProportionTest two_proportion_test(int succ_a, int n_a, int succ_b, int n_b);

// --- reports ----------------------------------------------------------------

struct ArmResult {
  std::string method;
  int n_demos = 0;
  int episodes = 0;
  std::uint64_t seed = 0;
  int successes = 0;
  int trials = 0;
  double mean_steps = 0.0;
  int synthesized = 0;  // trajectories before filtering
  int retained = 0;     // trajectories reaching the training set
  int training_pairs = 0;
};

struct SummaryRow {
  std::string method;
  int n_demos = 0;
  int episodes = 0;
  int seeds = 0;
  int successes = 0;  // pooled over seeds
  int trials = 0;
  double mean_rate = 0.0;  // mean of per-seed rates
  double sd_rate = 0.0;
  Interval ci;  // Wilson interval of the pooled rate
  double mean_retained = 0.0;
};

struct Comparison {
  std::string claim;
  std::string detail;
  bool holds = false;
};

struct ExperimentReport {
  std::string config_json;
  std::uint64_t config_hash = 0;
  double expert_success = 0.0;
  std::vector<ArmResult> arms;
  std::vector<SummaryRow> rows;
  std::vector<Comparison> comparisons;
};

std::vector<SummaryRow> summarize(const std::vector<ArmResult>& arms);

// Ordinal checks the experiment is designed to answer.
std::vector<Comparison> compare(const std::vector<SummaryRow>& rows,
                                const RunConfig& cfg);

using ProgressFn = std::function<void(const std::string&)>;

// Runs every planned arm. Throws StageFailure when the expert gate fails.
// Artifacts (datasets, checkpoints, filter reports) go under `run_dir` when
// it is not empty.
ExperimentReport run_experiment(const RunConfig& cfg,
                                const std::filesystem::path& run_dir = {},
                                const ProgressFn& progress = {});

// report.csv, report.json and figures/*.svg under `dir`.
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);
std::string report_csv(const ExperimentReport& report);
std::string report_json(const ExperimentReport& report);
ExperimentReport load_report(const std::filesystem::path& path);
std::string success_chart_svg(const ExperimentReport& report);
std::string scaling_chart_svg(const ExperimentReport& report);

}  // namespace wmdagger

#endif  // WMDAGGER_HARNESS_H_
