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

#include "wmdagger/synthesis.h"

#include <cmath>
#include <exception>

namespace wmdagger {

void validate(const SynthesisConfig& cfg) {
  if (cfg.k < 1) throw InvalidInput("synthesis horizon k must be >= 1");
  if (!(cfg.angle_deg > 90.0 && cfg.angle_deg <= 180.0)) {
    throw InvalidInput("deviation angle threshold must lie in (90, 180]");
  }
  if (cfg.history < 1) throw InvalidInput("synthesis history must be >= 1");
  if (cfg.pivot_margin < cfg.history) {
    throw InvalidInput("pivot margin must be >= the world-model history length");
  }
  if (cfg.episodes < 0) throw InvalidInput("episode count must be >= 0");
  if (cfg.direction_budget < 1 || cfg.pivot_budget < 1) {
    throw InvalidInput("synthesis retry budgets must be >= 1");
  }
}

double mean_step_displacement(std::span<const Trajectory> trajectories) {
  double total = 0.0;
  std::size_t count = 0;
  for (const Trajectory& t : trajectories) {
    for (const Step& s : t.steps) {
      total += (s.action.translation - s.pose.translation).norm();
      ++count;
    }
  }
  if (count == 0) throw InvalidInput("mean step displacement needs >= 1 transition");
  return total / static_cast<double>(count);
}

DirectionSample sample_deviation_direction(const Vec3& expert_motion,
                                           double angle_deg, bool constrained,
                                           double min_motion, Rng& rng) {
  const double n = expert_motion.norm();
  if (!(n >= min_motion)) {
    throw StationaryStep("expert motion at the pivot is below the threshold");
  }
  const Vec3 ref = expert_motion / n;
  const double max_dot = std::cos(angle_deg * M_PI / 180.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DirectionSample out;
  while (true) {
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const double len = v.norm();
    if (len < 1e-12) continue;
    v /= len;
    ++out.draws;
    if (!constrained || v.dot(ref) <= max_dot) {
      out.direction = v;
      return out;
    }
  }
}

std::vector<Action> build_corrective_actions(const Trajectory& traj, int pivot,
                                             int k, const Vec3& direction,
                                             double delta,
                                             const Box3& workspace) {
  if (pivot < 0 || pivot >= static_cast<int>(traj.size())) {
    throw InvalidInput("pivot outside the trajectory");
  }
  if (k < 1) throw InvalidInput("synthesis horizon k must be >= 1");
  if (std::abs(direction.norm() - 1.0) > kUnitTolerance) {
    throw InvalidInput("deviation direction must be a unit vector");
  }
  const Action& anchor = traj.steps[pivot].pose;
  std::vector<Action> waypoints(k + 1, anchor);
  for (int j = 1; j <= k; ++j) {
    waypoints[j].translation = anchor.translation + (j * delta) * direction;
    if (!workspace.contains(waypoints[j].translation)) {
      throw InvalidInput("deviation leaves the workspace");
    }
  }
  std::vector<Action> out;
  out.reserve(2 * k);
  for (int j = 1; j <= k; ++j) out.push_back(waypoints[j]);
  for (int j = k - 1; j >= 0; --j) out.push_back(waypoints[j]);
  return out;
}

Trajectory SynthesizedTrajectory::to_trajectory(TaskId task) const {
  Trajectory t;
  t.id = id;
  t.provenance = Provenance::kSynthesized;
  t.task = task;
  t.source_id = source_id;
  t.pivot = pivot;
  t.deviation_direction = direction;
  t.terminal_frame = terminal_frame;
  for (size_t i = 0; i < actions.size(); ++i) {
    t.steps.push_back(Step{poses[i], actions[i], frames[i], Phase::kRecovery});
  }
  return t;
}

namespace {

bool gripper_changes_near(const Trajectory& traj, int m, int guard) {
  const int n = static_cast<int>(traj.size());
  const double g = traj.steps[m].pose.gripper;
  for (int t = std::max(0, m - guard); t <= std::min(n - 1, m + guard); ++t) {
    if (traj.steps[t].pose.gripper != g || traj.steps[t].action.gripper != g) {
      return true;
    }
  }
  return false;
}

}  // namespace

SynthesizedTrajectory synthesize_recovery(
    const Trajectory& traj, const WorldModel& wm, const SynthesisConfig& cfg,
    const EnvConfig& env, double mean_delta, Rng& rng,
    std::uint64_t noise_seed, const std::vector<EnvState>* states) {
  validate(cfg);
  if (traj.provenance != Provenance::kExpert) {
    throw InvalidInput("recovery synthesis anchors on expert trajectories only");
  }
  const int n = static_cast<int>(traj.size());
  const int lo = cfg.pivot_margin;
  const int hi = std::min(n - cfg.pivot_margin, n - 1);
  if (hi < lo) {
    throw InvalidInput("trajectory " + std::to_string(traj.id) +
                       " is too short for the pivot margin");
  }
  std::vector<EnvState> replayed;
  if (states == nullptr && traj.initial_state) {
    replayed = replay_states(traj, env);
    states = &replayed;
  }

  std::uniform_int_distribution<int> pick(lo, hi);
  SynthesizedTrajectory out;
  for (int attempt = 1; attempt <= cfg.pivot_budget; ++attempt) {
    const int m = pick(rng);
    if (gripper_changes_near(traj, m, cfg.gripper_guard)) continue;
    const Vec3 expert_motion =
        traj.steps[m].action.translation - traj.steps[m].pose.translation;
    std::vector<Action> corrective;
    Vec3 direction;
    int draws = 0;
    int accepts = 0;
    try {
      while (draws < cfg.direction_budget) {
        const DirectionSample d = sample_deviation_direction(
            expert_motion, cfg.angle_deg, cfg.directional_constraint,
            cfg.min_expert_motion, rng);
        draws += d.draws;
        ++accepts;
        try {
          corrective = build_corrective_actions(traj, m, cfg.k, d.direction,
                                                mean_delta, env.workspace);
          direction = d.direction;
          break;
        } catch (const InvalidInput&) {
          // Leaves the workspace; draw another direction.
        }
      }
    } catch (const StationaryStep&) {
      continue;
    }
    if (corrective.empty()) continue;

    WMRequest req;
    req.horizon = 2 * cfg.k;
    req.noise_seed = noise_seed;
    for (int h = m - cfg.history + 1; h <= m; ++h) {
      req.history.push_back(traj.steps[h].frame);
      req.actions.push_back(traj.steps[h].pose);
    }
    req.actions.insert(req.actions.end(), corrective.begin(), corrective.end());
    if (states != nullptr) req.sim_state = (*states)[m];
    std::vector<Frame> frames = wm.predict(req);
    if (static_cast<int>(frames.size()) != 2 * cfg.k) {
      throw StageFailure("world model returned the wrong number of frames");
    }

    out.source_id = traj.id;
    out.pivot = m;
    out.direction = direction;
    out.anchor = traj.steps[m].pose;
    out.direction_draws = draws;
    out.direction_accepts = accepts;
    out.pivot_attempts = attempt;
    for (int j = cfg.k; j < 2 * cfg.k; ++j) {
      // Frame j - 1 is the prediction at pose a'_j.
      out.poses.push_back(corrective[j - 1]);
      out.actions.push_back(corrective[j]);
      out.frames.push_back(std::move(frames[j - 1]));
    }
    out.terminal_frame = std::move(frames.back());
    return out;
  }
  throw StageFailure("no usable pivot found in trajectory " +
                     std::to_string(traj.id) + " within the retry budget");
}

namespace {

struct BatchContext {
  std::vector<std::vector<EnvState>> states;
  double delta = 0.0;
};

BatchContext prepare_batch(std::span<const Trajectory> demos,
                           const SynthesisConfig& cfg, const EnvConfig& env) {
  validate(cfg);
  if (demos.empty()) throw InvalidInput("synthesis needs at least one demonstration");
  BatchContext ctx;
  ctx.delta = mean_step_displacement(demos);
  for (const Trajectory& t : demos) {
    ctx.states.push_back(t.initial_state ? replay_states(t, env)
                                         : std::vector<EnvState>{});
  }
  return ctx;
}

SynthesizedTrajectory run_episode(std::span<const Trajectory> demos,
                                  const WorldModel& wm,
                                  const SynthesisConfig& cfg,
                                  const EnvConfig& env, const BatchContext& ctx,
                                  int e) {
  const size_t src = static_cast<size_t>(e) % demos.size();
  Rng rng = make_rng(cfg.seed, streams::kSynthesis, e);
  const auto* states = ctx.states[src].empty() ? nullptr : &ctx.states[src];
  SynthesizedTrajectory s =
      synthesize_recovery(demos[src], wm, cfg, env, ctx.delta, rng,
                          stream_seed(cfg.seed, streams::kSynthesis, e), states);
  s.id = e;
  return s;
}

}  // namespace

std::vector<SynthesizedTrajectory> synthesize_batch_serial(
    std::span<const Trajectory> demos, const WorldModel& wm,
    const SynthesisConfig& cfg, const EnvConfig& env) {
  const BatchContext ctx = prepare_batch(demos, cfg, env);
  std::vector<SynthesizedTrajectory> out(cfg.episodes);
  for (int e = 0; e < cfg.episodes; ++e) {
    out[e] = run_episode(demos, wm, cfg, env, ctx, e);
  }
  return out;
}

std::vector<SynthesizedTrajectory> synthesize_batch(
    std::span<const Trajectory> demos, const WorldModel& wm,
    const SynthesisConfig& cfg, const EnvConfig& env) {
  const BatchContext ctx = prepare_batch(demos, cfg, env);
  std::vector<SynthesizedTrajectory> out(cfg.episodes);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 4)
  for (int e = 0; e < cfg.episodes; ++e) {
    try {
      out[e] = run_episode(demos, wm, cfg, env, ctx, e);
    } catch (...) {
#pragma omp critical(wmdagger_synthesis_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

}  // namespace wmdagger
