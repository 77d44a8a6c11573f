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

#include "wmdagger/harness.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <set>

#include <fmt/format.h>

#include "json.hpp"
#include "wmdagger/filtering.h"
#include "wmdagger/storage.h"
#include "wmdagger/synthesis.h"

namespace wmdagger {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool wants(const RunConfig& cfg, const std::string& method) {
  const auto& m = cfg.experiment.methods;
  return std::find(m.begin(), m.end(), method) != m.end();
}

MethodSpec make_spec(const RunConfig& cfg, const std::string& name, int n,
                     int episodes) {
  MethodSpec s;
  s.name = name;
  s.n_demos = n;
  s.episodes = name == "bc" ? 0 : episodes;
  s.wm = cfg.world_model.kind;
  s.hallucination = cfg.world_model.hallucination;
  s.seeds = cfg.experiment.seeds;
  return s;
}

}  // namespace

std::vector<MethodSpec> plan_methods(const RunConfig& cfg) {
  std::vector<MethodSpec> out;
  const int episodes = cfg.synthesis.episodes;
  for (int n : cfg.experiment.n_demos) {
    for (const char* m : {"bc", "dmd_lite", "wm_dagger"}) {
      if (wants(cfg, m)) out.push_back(make_spec(cfg, m, n, episodes));
    }
  }
  for (const char* m : {"wm_dagger_no_dir", "wm_dagger_no_filter"}) {
    if (wants(cfg, m)) {
      out.push_back(make_spec(cfg, m, cfg.experiment.ablation_n_demos, episodes));
    }
  }
  if (wants(cfg, "wm_dagger")) {
    for (int e : cfg.experiment.scaling_episodes) {
      const int n = cfg.experiment.scaling_n_demos;
      const bool planned = std::any_of(out.begin(), out.end(), [&](const MethodSpec& s) {
        return s.name == "wm_dagger" && s.n_demos == n && s.episodes == e;
      });
      if (!planned) out.push_back(make_spec(cfg, "wm_dagger", n, e));
    }
  }
  return out;
}

std::vector<Trajectory> collect_demos(const EnvConfig& env, int n,
                                      std::uint64_t seed) {
  if (n < 0) throw InvalidInput("demo count must be >= 0");
  std::vector<Trajectory> demos;
  const int max_attempts = 10 * n + 10;
  for (int i = 0; static_cast<int>(demos.size()) < n; ++i) {
    if (i >= max_attempts) {
      throw StageFailure("scripted expert failed too often while collecting demos");
    }
    Rng rng = make_rng(seed, streams::kDemo, i);
    const EnvState init = sample_initial_state(env, rng);
    ExpertResult r = scripted_expert(init, env, stream_seed(seed, streams::kJitter, i));
    if (!r.trajectory) continue;
    r.trajectory->id = static_cast<std::int64_t>(demos.size());
    demos.push_back(std::move(*r.trajectory));
  }
  return demos;
}

double expert_success_rate(const EnvConfig& env, int trials, std::uint64_t seed) {
  if (trials < 1) throw InvalidInput("expert gate needs >= 1 trial");
  int ok = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : ok)
  for (int i = 0; i < trials; ++i) {
    Rng rng = make_rng(seed, streams::kEval, i);
    const EnvState init = sample_initial_state(env, rng);
    ok += scripted_expert(init, env, stream_seed(seed, streams::kJitter, i))
              .trajectory.has_value();
  }
  return static_cast<double>(ok) / trials;
}

EvalResult evaluate_policy(const PolicyNet& net, const EnvConfig& env,
                           int trials, int max_steps, int stride,
                           std::uint64_t seed) {
  if (trials < 1) throw InvalidInput("evaluation needs >= 1 trial");
  std::vector<int> ok(trials, 0), steps(trials, 0);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < trials; ++i) {
    try {
      Rng rng = make_rng(seed, streams::kEval, i);
      const RolloutResult r =
          rollout(net, sample_initial_state(env, rng), env, max_steps, stride);
      ok[i] = r.success;
      steps[i] = r.steps;
    } catch (...) {
#pragma omp critical(wmdagger_eval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  EvalResult out;
  out.trials = trials;
  double total_steps = 0.0;
  for (int i = 0; i < trials; ++i) {
    out.successes += ok[i];
    out.outcomes.push_back(ok[i] != 0);
    total_steps += steps[i];
  }
  out.mean_steps = total_steps / trials;
  return out;
}

std::vector<Trajectory> dmd_lite_augment(std::span<const Trajectory> demos,
                                         const EnvConfig& env,
                                         const SynthesisConfig& cfg,
                                         int samples, std::uint64_t seed) {
  validate(cfg);
  if (demos.empty()) throw InvalidInput("dmd_lite needs demonstrations");
  const double delta = mean_step_displacement(demos);
  std::vector<std::vector<EnvState>> states;
  for (const Trajectory& t : demos) states.push_back(replay_states(t, env));

  std::vector<Trajectory> out(samples);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 8)
  for (int s = 0; s < samples; ++s) {
    try {
      const size_t src = static_cast<size_t>(s) % demos.size();
      const Trajectory& demo = demos[src];
      Rng rng = make_rng(seed, streams::kDmd, s);
      const int n = static_cast<int>(demo.size());
      const int lo = cfg.pivot_margin;
      const int hi = std::min(n - cfg.pivot_margin, n - 1);
      if (hi < lo) throw InvalidInput("demonstration too short for dmd_lite");
      std::uniform_int_distribution<int> pick(lo, hi);
      std::uniform_int_distribution<int> reach(1, cfg.k);
      bool done = false;
      for (int attempt = 0; attempt < cfg.pivot_budget && !done; ++attempt) {
        const int m = pick(rng);
        const Action& anchor = demo.steps[m].pose;
        const Vec3 motion = demo.steps[m].action.translation - anchor.translation;
        if (motion.norm() < cfg.min_expert_motion) continue;
        for (int d = 0; d < cfg.direction_budget && !done; ++d) {
          const DirectionSample dir = sample_deviation_direction(
              motion, cfg.angle_deg, cfg.directional_constraint,
              cfg.min_expert_motion, rng);
          Action perturbed = anchor;
          perturbed.translation += reach(rng) * delta * dir.direction;
          if (!env.workspace.contains(perturbed.translation)) continue;
          EnvState shown = states[src][m];
          shown.gripper = perturbed;
          Trajectory t;
          t.id = s;
          t.provenance = Provenance::kSynthesized;
          t.task = demo.task;
          t.source_id = demo.id;
          t.deviation_direction = dir.direction;
          t.steps.push_back(Step{perturbed, anchor, render(shown, env), Phase::kRecovery});
          out[s] = std::move(t);
          done = true;
        }
      }
      if (!done) throw StageFailure("dmd_lite could not place a perturbed pose");
    } catch (...) {
#pragma omp critical(wmdagger_dmd_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// --- statistics -------------------------------------------------------------

Interval wilson_interval(int successes, int trials, double z) {
  if (trials <= 0) throw InvalidInput("interval needs >= 1 trial");
  const double n = trials;
  const double p = successes / n;
  const double z2 = z * z;
  const double center = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

ProportionTest two_proportion_test(int succ_a, int n_a, int succ_b, int n_b) {
  if (n_a <= 0 || n_b <= 0) throw InvalidInput("proportion test needs trials");
  const double pa = static_cast<double>(succ_a) / n_a;
  const double pb = static_cast<double>(succ_b) / n_b;
  const double pooled = static_cast<double>(succ_a + succ_b) / (n_a + n_b);
  const double se = std::sqrt(pooled * (1 - pooled) * (1.0 / n_a + 1.0 / n_b));
  ProportionTest t;
  if (se == 0.0) {
    t.z = 0.0;
    t.p_value = 0.5;
    return t;
  }
  t.z = (pa - pb) / se;
  t.p_value = 0.5 * std::erfc(t.z / std::sqrt(2.0));
  return t;
}

// --- aggregation ------------------------------------------------------------

std::vector<SummaryRow> summarize(const std::vector<ArmResult>& arms) {
  std::vector<SummaryRow> rows;
  std::map<std::tuple<std::string, int, int>, size_t> where;
  std::vector<std::vector<double>> rates;
  for (const ArmResult& a : arms) {
    const auto key = std::make_tuple(a.method, a.n_demos, a.episodes);
    auto it = where.find(key);
    if (it == where.end()) {
      it = where.emplace(key, rows.size()).first;
      SummaryRow r;
      r.method = a.method;
      r.n_demos = a.n_demos;
      r.episodes = a.episodes;
      rows.push_back(r);
      rates.emplace_back();
    }
    SummaryRow& r = rows[it->second];
    ++r.seeds;
    r.successes += a.successes;
    r.trials += a.trials;
    r.mean_retained += a.retained;
    rates[it->second].push_back(static_cast<double>(a.successes) / a.trials);
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    SummaryRow& r = rows[i];
    const auto& v = rates[i];
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    r.mean_rate = mean;
    r.sd_rate = v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0;
    r.ci = wilson_interval(r.successes, r.trials);
    r.mean_retained /= r.seeds;
  }
  return rows;
}

namespace {

const SummaryRow* find_row(const std::vector<SummaryRow>& rows,
                           const std::string& method, int n, int episodes) {
  for (const auto& r : rows) {
    if (r.method == method && r.n_demos == n &&
        (method == "bc" || r.episodes == episodes)) {
      return &r;
    }
  }
  return nullptr;
}

std::string pct(double v) { return fmt::format("{:.1f}", 100.0 * v); }

}  // namespace

std::vector<Comparison> compare(const std::vector<SummaryRow>& rows,
                                const RunConfig& cfg) {
  std::vector<Comparison> out;
  const int e = cfg.synthesis.episodes;
  const double alpha = cfg.experiment.alpha;
  for (int n : cfg.experiment.n_demos) {
    const SummaryRow* bc = find_row(rows, "bc", n, 0);
    const SummaryRow* wm = find_row(rows, "wm_dagger", n, e);
    const SummaryRow* dmd = find_row(rows, "dmd_lite", n, e);
    if (bc && wm) {
      const auto t = two_proportion_test(wm->successes, wm->trials, bc->successes, bc->trials);
      const double gap = wm->mean_rate - bc->mean_rate;
      out.push_back({fmt::format("wm_dagger beats bc by >= 20 points (n_demos={})", n),
                     fmt::format("{} vs {} (gap {} points, z={:.2f}, p={:.2g})",
                                 pct(wm->mean_rate), pct(bc->mean_rate), pct(gap), t.z,
                                 t.p_value),
                     gap >= 0.20 && t.p_value < alpha});
    }
    if (bc && wm && dmd) {
      out.push_back({fmt::format("wm_dagger >= dmd_lite >= bc (n_demos={})", n),
                     fmt::format("{} >= {} >= {}", pct(wm->mean_rate),
                                 pct(dmd->mean_rate), pct(bc->mean_rate)),
                     wm->mean_rate >= dmd->mean_rate && dmd->mean_rate >= bc->mean_rate});
    }
  }
  const int na = cfg.experiment.ablation_n_demos;
  const SummaryRow* wm = find_row(rows, "wm_dagger", na, e);
  if (const SummaryRow* nd = find_row(rows, "wm_dagger_no_dir", na, e); wm && nd) {
    const double gap = wm->mean_rate - nd->mean_rate;
    out.push_back({fmt::format("wm_dagger_no_dir trails wm_dagger by >= 20 points (n_demos={})", na),
                   fmt::format("{} vs {} (gap {} points)", pct(wm->mean_rate),
                               pct(nd->mean_rate), pct(gap)),
                   gap >= 0.20});
  }
  if (const SummaryRow* nf = find_row(rows, "wm_dagger_no_filter", na, e); wm && nf) {
    const auto t = two_proportion_test(wm->successes, wm->trials, nf->successes, nf->trials);
    out.push_back({fmt::format("wm_dagger_no_filter trails wm_dagger significantly (n_demos={})", na),
                   fmt::format("{} vs {} (z={:.2f}, p={:.2g})", pct(wm->mean_rate),
                               pct(nf->mean_rate), t.z, t.p_value),
                   t.p_value < alpha && wm->mean_rate > nf->mean_rate});
  }
  std::vector<int> sweep = cfg.experiment.scaling_episodes;
  std::sort(sweep.begin(), sweep.end());
  std::vector<double> curve;
  for (int ep : sweep) {
    if (const SummaryRow* r = find_row(rows, "wm_dagger", cfg.experiment.scaling_n_demos, ep)) {
      curve.push_back(r->mean_rate);
    }
  }
  if (curve.size() == sweep.size() && curve.size() >= 3) {
    bool monotone = true;
    std::string shape;
    for (size_t i = 0; i < curve.size(); ++i) {
      if (i > 0 && curve[i] < curve[i - 1]) monotone = false;
      shape += (i ? " -> " : "") + pct(curve[i]);
    }
    const double first_gain = curve[1] - curve[0];
    const double last_gain = curve.back() - curve[curve.size() - 2];
    out.push_back({"success is non-decreasing in synthesized episodes with diminishing returns",
                   shape, monotone && last_gain < first_gain});
  }
  return out;
}

// --- experiment -------------------------------------------------------------

namespace {

struct SeedContext {
  std::uint64_t base = 0;
  std::vector<Trajectory> demos;
};

std::string arm_tag(const MethodSpec& s, std::uint64_t seed) {
  return fmt::format("{}_n{}_e{}_s{}", s.name, s.n_demos, s.episodes, seed);
}

std::unique_ptr<WorldModel> make_world_model(const RunConfig& cfg,
                                             std::span<const Trajectory> demos,
                                             std::uint64_t base, int n,
                                             const ProgressFn& progress) {
  HallucinationConfig h = cfg.world_model.hallucination;
  h.seed = stream_seed(base, streams::kHallucination, n);
  if (cfg.world_model.kind == WorldModelKind::kOracle) {
    return std::make_unique<OracleWM>(cfg.env, h);
  }
  FlowConfig fc = cfg.world_model.flow;
  fc.seed = stream_seed(base, streams::kTrain, 0x77);
  std::vector<Trajectory> data = collect_play_data(
      cfg.world_model.play_steps, stream_seed(base, streams::kPlay), cfg.env);
  data.insert(data.end(), demos.begin(), demos.end());
  const auto examples = make_flow_examples(data, fc, cfg.env);
  const Tokenizer tok(fc.latent_stride);
  FlowNet net(tok.latent_dim(cfg.env.intrinsics.height, cfg.env.intrinsics.width),
              fc.history, fc.hidden, fc.activation);
  FlowTrainResult r = rf_train(std::move(net), examples, fc);
  if (progress) progress("flow world model: " + r.report);
  return std::make_unique<FlowWM>(std::move(r.net), cfg.env, fc.latent_stride,
                                  fc.sample_steps, stream_seed(base, streams::kSynthesis, 0x77));
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& cfg, const fs::path& run_dir,
                                const ProgressFn& progress) {
  validate(cfg);
  auto log = [&](const std::string& s) {
    if (progress) progress(s);
  };
  ExperimentReport report;
  report.config_json = config_to_json(cfg);
  report.config_hash = config_hash(cfg);

  report.expert_success = expert_success_rate(
      cfg.env, cfg.experiment.gate_trials, stream_seed(cfg.seed, streams::kInit, 0x6761));
  log(fmt::format("expert gate: {}% over {} scenes", pct(report.expert_success),
                  cfg.experiment.gate_trials));
  if (report.expert_success < cfg.experiment.gate_min_success) {
    throw StageFailure(fmt::format("expert gate failed: {}% < {}%",
                                   pct(report.expert_success),
                                   pct(cfg.experiment.gate_min_success)));
  }

  const std::vector<MethodSpec> plan = plan_methods(cfg);
  std::set<int> demo_counts;
  for (const auto& s : plan) demo_counts.insert(s.n_demos);
  const int max_demos = demo_counts.empty() ? 0 : *demo_counts.rbegin();
  const bool save = !run_dir.empty();
  json filter_log = json::array();

  for (std::uint64_t seed : cfg.experiment.seeds) {
    SeedContext ctx;
    ctx.base = stream_seed(cfg.seed, streams::kInit, seed);
    ctx.demos = collect_demos(cfg.env, max_demos, ctx.base);
    if (save && cfg.experiment.save_datasets) {
      save_dataset(ctx.demos, run_dir / "datasets" / fmt::format("demos_s{}", seed),
                   ctx.base, report.config_hash);
    }
    PolicyConfig pc = cfg.policy;
    pc.seed = stream_seed(ctx.base, streams::kTrain);
    const std::uint64_t eval_seed = stream_seed(ctx.base, streams::kEval);

    for (int n : demo_counts) {
      const std::span<const Trajectory> demos(ctx.demos.data(), n);
      int need_constrained = 0, need_free = 0, need_dmd = 0;
      for (const auto& s : plan) {
        if (s.n_demos != n) continue;
        if (s.name == "wm_dagger" || s.name == "wm_dagger_no_filter") {
          need_constrained = std::max(need_constrained, s.episodes);
        } else if (s.name == "wm_dagger_no_dir") {
          need_free = std::max(need_free, s.episodes);
        } else if (s.name == "dmd_lite") {
          need_dmd = std::max(need_dmd, s.episodes);
        }
      }
      std::unique_ptr<WorldModel> wm;
      if (need_constrained + need_free > 0) {
        wm = make_world_model(cfg, demos, ctx.base, n, progress);
      }
      SynthesisConfig sc = cfg.synthesis;
      sc.seed = stream_seed(ctx.base, streams::kSynthesis, n);
      std::vector<SynthesizedTrajectory> constrained, free;
      if (need_constrained > 0) {
        sc.episodes = need_constrained;
        sc.directional_constraint = true;
        constrained = synthesize_batch(demos, *wm, sc, cfg.env);
      }
      if (need_free > 0) {
        sc.episodes = need_free;
        sc.directional_constraint = false;
        free = synthesize_batch(demos, *wm, sc, cfg.env);
      }
      std::vector<Frame> anchors_c = anchor_frames(constrained, demos);
      std::vector<Frame> anchors_f = anchor_frames(free, demos);
      const HandcraftedEmbedder embedder(cfg.env.intrinsics.height,
                                         cfg.env.intrinsics.width,
                                         cfg.filtering.embedding_dim);

      for (const MethodSpec& spec : plan) {
        if (spec.n_demos != n) continue;
        ArmResult arm;
        arm.method = spec.name;
        arm.n_demos = n;
        arm.episodes = spec.episodes;
        arm.seed = seed;
        AggregatedDataset data;
        data.expert.assign(demos.begin(), demos.end());
        if (spec.name == "dmd_lite") {
          SynthesisConfig dc = cfg.synthesis;
          data.synthesized = dmd_lite_augment(demos, cfg.env, dc, spec.episodes * dc.k,
                                              stream_seed(ctx.base, streams::kDmd, n));
          arm.synthesized = arm.retained = static_cast<int>(data.synthesized.size());
        } else if (spec.name != "bc") {
          const bool is_free = spec.name == "wm_dagger_no_dir";
          const auto& pool = is_free ? free : constrained;
          const auto& anchors = is_free ? anchors_f : anchors_c;
          const std::span<const SynthesizedTrajectory> batch(pool.data(), spec.episodes);
          std::vector<bool> keep(batch.size(), true);
          const bool filter = cfg.filtering.enabled && spec.name != "wm_dagger_no_filter";
          if (filter) {
            FilterResult fr = filter_batch(
                batch, std::span<const Frame>(anchors.data(), spec.episodes), embedder,
                arm_tag(spec, seed));
            keep = fr.keep;
            json entry = json::parse(fr.report.to_json());
            filter_log.push_back(std::move(entry));
          }
          for (size_t i = 0; i < batch.size(); ++i) {
            if (keep[i]) data.synthesized.push_back(batch[i].to_trajectory(cfg.task));
          }
          arm.synthesized = static_cast<int>(batch.size());
          arm.retained = static_cast<int>(data.synthesized.size());
          if (save && cfg.experiment.save_datasets && spec.name == "wm_dagger" &&
              spec.episodes == cfg.synthesis.episodes) {
            save_dataset(data.synthesized,
                         run_dir / "datasets" / fmt::format("synthesized_n{}_s{}", n, seed),
                         sc.seed, report.config_hash);
          }
        }
        const auto pairs = make_chunks(data, pc.horizon, pc.obs_size);
        arm.training_pairs = static_cast<int>(pairs.size());
        PolicyTrainResult trained = train_policy(pairs, pc);
        if (save && cfg.experiment.save_checkpoints) {
          save_policy(trained.net,
                      run_dir / "checkpoints" / (arm_tag(spec, seed) + ".ckpt"),
                      report.config_hash);
        }
        const EvalResult ev = evaluate_policy(trained.net, cfg.env, cfg.eval.trials,
                                              cfg.eval.max_steps, pc.stride, eval_seed);
        arm.successes = ev.successes;
        arm.trials = ev.trials;
        arm.mean_steps = ev.mean_steps;
        log(fmt::format("{}: {}/{} ({} synthesized, {} kept)", arm_tag(spec, seed),
                        arm.successes, arm.trials, arm.synthesized, arm.retained));
        report.arms.push_back(arm);
      }
    }
  }
  if (save) write_text_atomic(run_dir / "filter_report.json", filter_log.dump(1) + "\n");
  report.rows = summarize(report.arms);
  report.comparisons = compare(report.rows, cfg);
  return report;
}

// --- report files -----------------------------------------------------------

std::string report_csv(const ExperimentReport& report) {
  std::string out =
      "method,n_demos,episodes,seeds,successes,trials,success_rate,mean_rate,sd_rate,"
      "ci_low,ci_high,mean_retained\n";
  for (const SummaryRow& r : report.rows) {
    out += fmt::format("{},{},{},{},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.1f}\n",
                       r.method, r.n_demos, r.episodes, r.seeds, r.successes, r.trials,
                       static_cast<double>(r.successes) / r.trials, r.mean_rate, r.sd_rate,
                       r.ci.lo, r.ci.hi, r.mean_retained);
  }
  return out;
}

std::string report_json(const ExperimentReport& report) {
  json j;
  j["config"] = json::parse(report.config_json);
  j["config_hash"] = report.config_hash;
  j["expert_success"] = report.expert_success;
  j["arms"] = json::array();
  for (const ArmResult& a : report.arms) {
    j["arms"].push_back({{"method", a.method},
                         {"n_demos", a.n_demos},
                         {"episodes", a.episodes},
                         {"seed", a.seed},
                         {"successes", a.successes},
                         {"trials", a.trials},
                         {"mean_steps", a.mean_steps},
                         {"synthesized", a.synthesized},
                         {"retained", a.retained},
                         {"training_pairs", a.training_pairs}});
  }
  j["rows"] = json::array();
  for (const SummaryRow& r : report.rows) {
    j["rows"].push_back({{"method", r.method},
                         {"n_demos", r.n_demos},
                         {"episodes", r.episodes},
                         {"seeds", r.seeds},
                         {"successes", r.successes},
                         {"trials", r.trials},
                         {"mean_rate", r.mean_rate},
                         {"sd_rate", r.sd_rate},
                         {"ci_low", r.ci.lo},
                         {"ci_high", r.ci.hi},
                         {"mean_retained", r.mean_retained}});
  }
  j["comparisons"] = json::array();
  for (const Comparison& c : report.comparisons) {
    j["comparisons"].push_back(
        {{"claim", c.claim}, {"detail", c.detail}, {"holds", c.holds}});
  }
  return j.dump(2) + "\n";
}

ExperimentReport load_report(const fs::path& path) {
  ExperimentReport r;
  try {
    const json j = json::parse(read_text(path));
    r.config_json = config_to_json(config_from_json(j.at("config").dump()));
    r.config_hash = j.at("config_hash").get<std::uint64_t>();
    r.expert_success = j.at("expert_success").get<double>();
    for (const json& a : j.at("arms")) {
      ArmResult x;
      x.method = a.at("method").get<std::string>();
      x.n_demos = a.at("n_demos").get<int>();
      x.episodes = a.at("episodes").get<int>();
      x.seed = a.at("seed").get<std::uint64_t>();
      x.successes = a.at("successes").get<int>();
      x.trials = a.at("trials").get<int>();
      x.mean_steps = a.at("mean_steps").get<double>();
      x.synthesized = a.at("synthesized").get<int>();
      x.retained = a.at("retained").get<int>();
      x.training_pairs = a.at("training_pairs").get<int>();
      r.arms.push_back(x);
    }
    for (const json& c : j.at("comparisons")) {
      r.comparisons.push_back({c.at("claim").get<std::string>(),
                               c.at("detail").get<std::string>(),
                               c.at("holds").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("malformed report " + path.string() + ": " + e.what());
  }
  r.rows = summarize(r.arms);
  return r;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string svg_open(int w, int h, const std::string& title) {
  return fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{3}</text>\n",
      w, h, w / 2, xml_escape(title));
}

std::string y_axis(int left, int top, int plot_h, int right) {
  std::string s;
  for (int t = 0; t <= 100; t += 20) {
    const double y = top + plot_h * (1.0 - t / 100.0);
    s += fmt::format(
        "<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n"
        "<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{}%</text>\n",
        left, y, right, y, left - 4, y + 4, t);
  }
  return s;
}

}  // namespace

std::string success_chart_svg(const ExperimentReport& report) {
  std::vector<const SummaryRow*> bars;
  for (const SummaryRow& r : report.rows) bars.push_back(&r);
  const int left = 50, top = 30, plot_h = 220, bar_w = 28, gap = 12;
  const int width = std::max(320, left + 20 + static_cast<int>(bars.size()) * (bar_w + gap));
  const int height = top + plot_h + 130;
  std::string s = svg_open(width, height, "Success rate per arm (mean over seeds)");
  s += y_axis(left, top, plot_h, width - 10);
  for (size_t i = 0; i < bars.size(); ++i) {
    const SummaryRow& r = *bars[i];
    const double x = left + gap + i * (bar_w + gap);
    const double h = plot_h * r.mean_rate;
    const double lo = top + plot_h * (1 - r.ci.lo), hi = top + plot_h * (1 - r.ci.hi);
    const char* color = r.method == "bc"          ? "#8c8c8c"
                        : r.method == "dmd_lite"  ? "#e0a030"
                        : r.method == "wm_dagger" ? "#3070c0"
                                                  : "#c05050";
    s += fmt::format(
        "<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{}\" height=\"{:.1f}\" fill=\"{}\"/>\n"
        "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"black\"/>\n"
        "<text transform=\"translate({:.1f},{}) rotate(60)\">{}</text>\n",
        x, top + plot_h - h, bar_w, h, color, x + bar_w / 2.0, lo, x + bar_w / 2.0, hi,
        x + 4, top + plot_h + 12,
        xml_escape(fmt::format("{} n={} e={}", r.method, r.n_demos, r.episodes)));
  }
  s += "</svg>\n";
  return s;
}

std::string scaling_chart_svg(const ExperimentReport& report) {
  std::map<int, std::vector<const SummaryRow*>> by_n;
  for (const SummaryRow& r : report.rows) {
    if (r.method == "wm_dagger") by_n[r.n_demos].push_back(&r);
  }
  std::vector<const SummaryRow*> pts;
  for (auto& [n, rows] : by_n) {
    if (rows.size() > pts.size()) pts = rows;
  }
  std::sort(pts.begin(), pts.end(),
            [](const SummaryRow* a, const SummaryRow* b) { return a->episodes < b->episodes; });
  const int left = 50, top = 30, plot_w = 380, plot_h = 220;
  std::string s = svg_open(left + plot_w + 30, top + plot_h + 50,
                           "wm_dagger success vs synthesized episodes");
  s += y_axis(left, top, plot_h, left + plot_w);
  const int max_e = pts.empty() ? 1 : std::max(1, pts.back()->episodes);
  std::string path;
  for (const SummaryRow* r : pts) {
    const double x = left + plot_w * static_cast<double>(r->episodes) / max_e;
    const double y = top + plot_h * (1 - r->mean_rate);
    path += fmt::format("{}{:.1f},{:.1f}", path.empty() ? "" : " ", x, y);
    s += fmt::format(
        "<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"#3070c0\"/>\n"
        "<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        x, y, x, top + plot_h + 16, r->episodes);
  }
  if (!path.empty()) {
    s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#3070c0\"/>\n", path);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">episodes</text>\n",
                   left + plot_w / 2, top + plot_h + 36);
  s += "</svg>\n";
  return s;
}

void emit_report(const ExperimentReport& report, const fs::path& dir) {
  write_text_atomic(dir / "report.csv", report_csv(report));
  write_text_atomic(dir / "report.json", report_json(report));
  write_text_atomic(dir / "figures" / "success_rates.svg", success_chart_svg(report));
  write_text_atomic(dir / "figures" / "scaling.svg", scaling_chart_svg(report));
}

}  // namespace wmdagger
