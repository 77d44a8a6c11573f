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

#ifndef WMDAGGER_SYNTHESIS_H_
#define WMDAGGER_SYNTHESIS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "wmdagger/envsim.h"
#include "wmdagger/worldmodel.h"

// Corrective action synthesis: push the gripper off an expert trajectory
// along a sampled direction, then retrace back to the anchor pose, imagining
// the frames with a world model. Only the way back becomes training data.

namespace wmdagger {

struct SynthesisConfig {
  int k = 8;                      // deviation horizon
  double angle_deg = 120.0;       // min angle between v_d and expert motion
  int history = 2;                // p frames of world-model context
  int pivot_margin = 2;           // pivot stays this far from both ends
  int episodes = 1500;
  std::uint64_t seed = 0;
  // When false, v_d is uniform on the sphere (ablation).
  bool directional_constraint = true;
  double min_expert_motion = 1e-6;  // stationary-step threshold (m)
  int gripper_guard = 2;  // skip pivots this close to a gripper change
  int direction_budget = 1000;  // v_d draws per pivot
  int pivot_budget = 100;       // pivots per episode
};

// Throws InvalidInput unless k >= 1, angle in (90, 180], margin >= history.
void validate(const SynthesisConfig& cfg);

// Mean translation norm between consecutive observed poses (pose_t to
// action_t) over every step of every trajectory.
double mean_step_displacement(std::span<const Trajectory> trajectories);

// Thrown when the expert does not move at the pivot, so the reference
// direction is undefined. Callers pick another pivot.
class StationaryStep : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct DirectionSample {
  Vec3 direction;
  int draws = 0;  // uniform proposals consumed, accepted one included
};

// Rejection-samples a unit v_d with angle(v_d, expert_motion) >= angle_deg.
// With `constrained` false the first uniform draw is returned.
DirectionSample sample_deviation_direction(const Vec3& expert_motion,
                                           double angle_deg, bool constrained,
                                           double min_motion, Rng& rng);

// 2k gripper poses: out along v_d for k steps of length delta from the pose
// at `pivot`, then back along the same waypoints. Orientation and gripper
// stay at their pivot values. Throws InvalidInput if a waypoint leaves
// `workspace`.
std::vector<Action> build_corrective_actions(const Trajectory& traj, int pivot,
                                             int k, const Vec3& direction,
                                             double delta,
                                             const Box3& workspace);

struct SynthesizedTrajectory {
  std::int64_t id = 0;
  std::int64_t source_id = -1;
  int pivot = -1;
  Vec3 direction = Vec3::Zero();
  Action anchor;                       // expert pose at the pivot
  std::vector<Action> poses;    // a'_{k..2k-1}, where each frame is seen
  std::vector<Action> actions;  // a'_{k+1..2k}
  std::vector<Frame> frames;    // predicted frames at `poses`
  Frame terminal_frame;                // predicted frame at a'_{2k}
  int direction_draws = 0;    // uniform proposals
  int direction_accepts = 0;  // proposals passing the angle test
  int pivot_attempts = 0;

  // Recovery-phase trajectory with provenance and terminal frame attached.
  Trajectory to_trajectory(TaskId task) const;
};

// Pivot uniform in [margin, len - margin]. `states`, when given, holds the
// simulator states replayed along `traj` (needed by the oracle model).
SynthesizedTrajectory synthesize_recovery(
    const Trajectory& traj, const WorldModel& wm, const SynthesisConfig& cfg,
    const EnvConfig& env, double mean_delta, Rng& rng,
    std::uint64_t noise_seed, const std::vector<EnvState>* states = nullptr);

// cfg.episodes recoveries; episode e anchors on demo e mod n and draws from
// its own stream, so results do not depend on scheduling and a smaller batch
// is a prefix of a larger one.
std::vector<SynthesizedTrajectory> synthesize_batch(
    std::span<const Trajectory> demos, const WorldModel& wm,
    const SynthesisConfig& cfg, const EnvConfig& env);
std::vector<SynthesizedTrajectory> synthesize_batch_serial(
    std::span<const Trajectory> demos, const WorldModel& wm,
    const SynthesisConfig& cfg, const EnvConfig& env);

}  // namespace wmdagger

#endif  // WMDAGGER_SYNTHESIS_H_
