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

// Command-line entry point: one subcommand per pipeline stage plus the full
// experiment. Stage artifacts live under the run directory so later stages
// pick up earlier outputs.

#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "wmdagger/config.h"
#include "wmdagger/filtering.h"
#include "wmdagger/harness.h"
#include "wmdagger/storage.h"
#include "wmdagger/synthesis.h"

namespace fs = std::filesystem;
using namespace wmdagger;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  int jobs = 0;
  bool quiet = false;
  std::string synthesized = "filtered";
  std::string checkpoint;
};

struct Context {
  RunConfig cfg;
  fs::path dir;
};

Context prepare(const Options& o) {
  Context c;
  c.cfg = o.config.empty() ? default_config() : load_config(o.config);
  std::vector<std::string> overrides = o.overrides;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  c.cfg = apply_overrides(c.cfg, overrides);
  if (!o.out.empty()) {
    c.dir = o.out;
  } else if (const char* env = std::getenv("WMDAGGER_RUN_DIR"); env && *env) {
    c.dir = env;
  } else {
    c.dir = "runs/default";
  }
  if (o.jobs > 0) omp_set_num_threads(o.jobs);
  fs::create_directories(c.dir);
  write_text_atomic(c.dir / "config.json", config_to_json(c.cfg));
  return c;
}

fs::path dataset_dir(const Context& c, const std::string& name) {
  return c.dir / "datasets" / name;
}

std::vector<Trajectory> require_dataset(const Context& c, const std::string& name) {
  const fs::path p = dataset_dir(c, name);
  if (!fs::exists(p / "manifest.json")) {
    throw MissingInput("missing dataset " + p.string() + " (run the earlier stage first)");
  }
  return load_dataset(p);
}

std::uint64_t base_seed(const RunConfig& cfg) {
  return stream_seed(cfg.seed, streams::kInit, 0);
}

void run_collect(const Context& c) {
  const std::uint64_t base = base_seed(c.cfg);
  const auto demos = collect_demos(c.cfg.env, c.cfg.n_demos, base);
  save_dataset(demos, dataset_dir(c, "demos"), base, config_hash(c.cfg));
  std::vector<Trajectory> play = collect_play_data(
      c.cfg.world_model.play_steps, stream_seed(base, streams::kPlay), c.cfg.env);
  save_dataset(play, dataset_dir(c, "play"), base, config_hash(c.cfg));
  spdlog::info("collected {} demonstrations and {} play episodes", demos.size(),
               play.size());
}

void run_train_wm(const Context& c) {
  std::vector<Trajectory> data = require_dataset(c, "play");
  const auto demos = require_dataset(c, "demos");
  data.insert(data.end(), demos.begin(), demos.end());
  FlowConfig fc = c.cfg.world_model.flow;
  fc.seed = stream_seed(base_seed(c.cfg), streams::kTrain, 0x77);
  const auto examples = make_flow_examples(data, fc, c.cfg.env);
  const Tokenizer tok(fc.latent_stride);
  FlowNet net(tok.latent_dim(c.cfg.env.intrinsics.height, c.cfg.env.intrinsics.width),
              fc.history, fc.hidden, fc.activation);
  FlowTrainResult r = rf_train(std::move(net), examples, fc);
  save_flow(r.net, c.dir / "checkpoints" / "flow.ckpt", config_hash(c.cfg));
  json log;
  log["examples"] = examples.size();
  log["heldout_loss"] = r.heldout_loss;
  log["smoothed"] = r.smoothed;
  log["converged"] = r.converged;
  log["report"] = r.report;
  write_text_atomic(c.dir / "wm_train.json", log.dump(2) + "\n");
  spdlog::info("flow world model: {}", r.report);
  if (!r.converged) throw StageFailure("flow world model did not converge: " + r.report);
}

std::unique_ptr<WorldModel> load_world_model(const Context& c) {
  if (c.cfg.world_model.kind == WorldModelKind::kOracle) {
    HallucinationConfig h = c.cfg.world_model.hallucination;
    h.seed = stream_seed(base_seed(c.cfg), streams::kHallucination);
    return std::make_unique<OracleWM>(c.cfg.env, h);
  }
  const fs::path ckpt = c.dir / "checkpoints" / "flow.ckpt";
  if (!fs::exists(ckpt)) throw MissingInput("missing checkpoint " + ckpt.string());
  const FlowConfig& fc = c.cfg.world_model.flow;
  return std::make_unique<FlowWM>(load_flow(ckpt, config_hash(c.cfg)), c.cfg.env,
                                  fc.latent_stride, fc.sample_steps,
                                  stream_seed(base_seed(c.cfg), streams::kSynthesis, 0x77));
}

std::vector<SynthesizedTrajectory> from_dataset(const std::vector<Trajectory>& trajs) {
  std::vector<SynthesizedTrajectory> out;
  for (const Trajectory& t : trajs) {
    if (!t.terminal_frame) {
      throw IntegrityError("synthesized trajectory " + std::to_string(t.id) +
                           " has no terminal frame");
    }
    SynthesizedTrajectory s;
    s.id = t.id;
    s.source_id = t.source_id;
    s.pivot = t.pivot;
    s.direction = t.deviation_direction;
    for (const Step& st : t.steps) {
      s.poses.push_back(st.pose);
      s.actions.push_back(st.action);
      s.frames.push_back(st.frame);
    }
    s.terminal_frame = *t.terminal_frame;
    out.push_back(std::move(s));
  }
  return out;
}

void run_synthesize(const Context& c) {
  const auto demos = require_dataset(c, "demos");
  const auto wm = load_world_model(c);
  SynthesisConfig sc = c.cfg.synthesis;
  sc.seed = stream_seed(base_seed(c.cfg), streams::kSynthesis);
  const auto batch = synthesize_batch(demos, *wm, sc, c.cfg.env);
  std::vector<Trajectory> trajs;
  for (const auto& s : batch) trajs.push_back(s.to_trajectory(c.cfg.task));
  save_dataset(trajs, dataset_dir(c, "synthesized"), sc.seed, config_hash(c.cfg));
  spdlog::info("synthesized {} recovery trajectories", trajs.size());
}

void run_filter(const Context& c) {
  const auto demos = require_dataset(c, "demos");
  const auto synth = require_dataset(c, "synthesized");
  const auto batch = from_dataset(synth);
  std::vector<Trajectory> kept;
  FilterReport report;
  if (!batch.empty()) {
    const HandcraftedEmbedder emb(c.cfg.env.intrinsics.height, c.cfg.env.intrinsics.width,
                                  c.cfg.filtering.embedding_dim);
    const auto anchors = anchor_frames(batch, demos);
    FilterResult fr = filter_batch(batch, anchors, emb, to_string(c.cfg.task));
    if (!c.cfg.filtering.enabled) fr.keep.assign(batch.size(), true);
    report = fr.report;
    for (size_t i = 0; i < synth.size(); ++i) {
      if (fr.keep[i]) kept.push_back(synth[i]);
    }
  }
  save_dataset(kept, dataset_dir(c, "filtered"), c.cfg.seed, config_hash(c.cfg));
  write_text_atomic(c.dir / "filter_report.json", report.to_json() + "\n");
  spdlog::info("kept {} of {} synthesized trajectories", kept.size(), synth.size());
}

void run_train_policy(const Context& c, const Options& o) {
  AggregatedDataset data;
  data.expert = require_dataset(c, "demos");
  if (o.synthesized != "none") data.synthesized = require_dataset(c, o.synthesized);
  PolicyConfig pc = c.cfg.policy;
  pc.seed = stream_seed(base_seed(c.cfg), streams::kTrain);
  const PolicyTrainResult r = train_policy(data, pc);
  save_policy(r.net, c.dir / "checkpoints" / "policy.ckpt", config_hash(c.cfg));
  json log;
  log["train_loss_final"] = r.train_loss.empty() ? 0.0 : r.train_loss.back();
  log["heldout_loss"] = r.heldout_loss;
  write_text_atomic(c.dir / "policy_train.json", log.dump(2) + "\n");
  spdlog::info("trained policy on {} expert and {} synthesized trajectories",
               data.expert.size(), data.synthesized.size());
}

void run_eval(const Context& c, const Options& o) {
  const fs::path ckpt =
      o.checkpoint.empty() ? c.dir / "checkpoints" / "policy.ckpt" : fs::path(o.checkpoint);
  if (!fs::exists(ckpt)) throw MissingInput("missing checkpoint " + ckpt.string());
  const PolicyNet net = load_policy(ckpt);
  const EvalResult r =
      evaluate_policy(net, c.cfg.env, c.cfg.eval.trials, c.cfg.eval.max_steps,
                      c.cfg.policy.stride, stream_seed(base_seed(c.cfg), streams::kEval));
  const Interval ci = wilson_interval(r.successes, r.trials);
  json j;
  j["checkpoint"] = ckpt.string();
  j["successes"] = r.successes;
  j["trials"] = r.trials;
  j["success_rate"] = static_cast<double>(r.successes) / r.trials;
  j["ci_low"] = ci.lo;
  j["ci_high"] = ci.hi;
  j["mean_steps"] = r.mean_steps;
  write_text_atomic(c.dir / "eval.json", j.dump(2) + "\n");
  std::cout << fmt::format("success {}/{} ({:.1f}%, 95% CI {:.1f}-{:.1f}%)\n", r.successes,
                           r.trials, 100.0 * r.successes / r.trials, 100 * ci.lo,
                           100 * ci.hi);
}

void print_comparisons(const ExperimentReport& report) {
  for (const Comparison& cmp : report.comparisons) {
    std::cout << (cmp.holds ? "[holds] " : "[fails] ") << cmp.claim << ": " << cmp.detail
              << "\n";
  }
}

void run_experiment_cmd(const Context& c) {
  const ExperimentReport report = run_experiment(
      c.cfg, c.dir, [](const std::string& s) { spdlog::info("{}", s); });
  emit_report(report, c.dir);
  std::cout << report_csv(report);
  print_comparisons(report);
}

void run_report(const Context& c) {
  const fs::path p = c.dir / "report.json";
  if (!fs::exists(p)) throw MissingInput("missing report " + p.string());
  const ExperimentReport report = load_report(p);
  emit_report(report, c.dir);
  std::cout << report_csv(report);
  print_comparisons(report);
}

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"World-model-guided corrective data synthesis for imitation learning"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "Global seed (overrides the config)");
    sub->add_option("--out", o.out, "Run directory (default $WMDAGGER_RUN_DIR or runs/default)");
    sub->add_option("--override", o.overrides, "Config override key=value (repeatable)");
    sub->add_option("--jobs", o.jobs, "Worker threads");
    sub->add_flag("--quiet", o.quiet, "Only print warnings and errors");
  };
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"collect", "Scripted expert demonstrations and play data"},
      {"train-wm", "Train the flow world model on play data and demonstrations"},
      {"synthesize", "Synthesize recovery trajectories from the demonstrations"},
      {"filter", "Drop synthesized trajectories below the batch-mean consistency"},
      {"train-policy", "Train the chunked policy on demonstrations plus kept data"},
      {"eval", "Evaluate a policy checkpoint on seeded scenes"},
      {"experiment", "Run every method arm and write the report"},
      {"report", "Re-emit CSV and figures from report.json"},
  };
  std::map<std::string, CLI::App*> cmds;
  for (const Sub& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    common(sub);
    cmds[s.name] = sub;
  }
  cmds["train-policy"]->add_option(
      "--synthesized", o.synthesized,
      "Synthesized dataset to aggregate (filtered, synthesized or none)");
  cmds["eval"]->add_option("--checkpoint", o.checkpoint, "Policy checkpoint path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  spdlog::set_level(o.quiet ? spdlog::level::warn : spdlog::level::info);

  std::string stage;
  for (const auto& [name, sub] : cmds) {
    if (sub->parsed()) stage = name;
  }
  try {
    const Context c = prepare(o);
    if (stage == "collect") run_collect(c);
    else if (stage == "train-wm") run_train_wm(c);
    else if (stage == "synthesize") run_synthesize(c);
    else if (stage == "filter") run_filter(c);
    else if (stage == "train-policy") run_train_policy(c, o);
    else if (stage == "eval") run_eval(c, o);
    else if (stage == "experiment") run_experiment_cmd(c);
    else if (stage == "report") run_report(c);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << fmt::format("error stage={} kind=config key={} message={}\n", stage,
                             e.key(), one_line(e.what()));
    return 2;
  } catch (const MissingInput& e) {
    std::cerr << fmt::format("error stage={} kind=missing_input message={}\n", stage,
                             one_line(e.what()));
    return 1;
  } catch (const std::exception& e) {
    std::cerr << fmt::format("error stage={} kind=stage_failure message={}\n", stage,
                             one_line(e.what()));
    return 1;
  }
}
