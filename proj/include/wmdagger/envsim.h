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

#ifndef WMDAGGER_ENVSIM_H_
#define WMDAGGER_ENVSIM_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wmdagger/common.h"
#include "wmdagger/geometry.h"

// Deterministic tabletop scene observed by an eye-in-hand camera.
//
// World frame: x right, y forward (towards the target), z up, table at
// z = table_height. The gripper pose is the fingertip position; the camera
// sits behind and above it through the hand-eye calibration.

namespace wmdagger {

enum class TaskId { kPush, kPick };
enum class ObjectKind { kBlock, kBag };
enum class Provenance { kExpert, kPlay, kSynthesized };
// Which half of a synthesized corrective episode a step belongs to.
enum class Phase { kNone, kDeviation, kRecovery };

std::string to_string(TaskId task);
std::string to_string(ObjectKind kind);
std::string to_string(Provenance p);
std::string to_string(Phase p);
TaskId task_from_string(const std::string& s);
ObjectKind object_kind_from_string(const std::string& s);
Provenance provenance_from_string(const std::string& s);
Phase phase_from_string(const std::string& s);

// Axis-aligned box, closed on every face.
struct Box3 {
  Vec3 lo = Vec3::Zero();
  Vec3 hi = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
};

struct Scene {
  Vec3 object_position = Vec3::Zero();  // centroid
  ObjectKind kind = ObjectKind::kBag;
  double softness = 0.5;
  Vec3 object_half_extent = Vec3(0.04, 0.04, 0.03);
  Box3 target;
  double table_height = 0.0;
  std::uint64_t texture_seed = 0;
};

struct EnvState {
  Scene scene;
  Action gripper;
  bool held = false;
  int step_count = 0;
  Vec3 grasp_offset = Vec3::Zero();  // object centroid minus tip while held
  double squash = 0.0;   // bag deformation in [0, 1), set by the contact geometry
  bool clamped = false;  // last step hit the workspace boundary
};

// Grayscale (C = 1) image, row-major, values in [0, 1].
struct Frame {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> pixels;

  Frame() = default;
  Frame(int h, int w, int c = 1)
      : height(h), width(w), channels(c),
        pixels(static_cast<size_t>(h) * w * c, 0.0f) {}

  float at(int v, int u, int c = 0) const {
    return pixels[(static_cast<size_t>(v) * width + u) * channels + c];
  }
  friend bool operator==(const Frame&, const Frame&) = default;
};

// One time step: the frame observed at `pose`, and the target pose that was
// commanded after observing it.
struct Step {
  Action pose;
  Action action;
  Frame frame;
  Phase phase = Phase::kNone;
};

struct Trajectory {
  std::int64_t id = 0;
  Provenance provenance = Provenance::kExpert;
  TaskId task = TaskId::kPush;
  std::vector<Step> steps;
  // Simulator state before the first step (expert and play data); lets the
  // oracle world model and replay checks reconstruct hidden state.
  std::optional<EnvState> initial_state;
  // Synthesized trajectories only.
  std::int64_t source_id = -1;
  int pivot = -1;
  Vec3 deviation_direction = Vec3::Zero();
  std::optional<Frame> terminal_frame;

  size_t size() const { return steps.size(); }
};

struct EnvConfig {
  TaskId task = TaskId::kPush;
  ObjectKind object = ObjectKind::kBag;
  double softness = 0.5;
  CameraIntrinsics intrinsics;
  HandEyeCalib calib = default_hand_eye();
  Box3 workspace{Vec3(-0.30, -0.35, 0.015), Vec3(0.30, 0.45, 0.30)};
  double max_step = 0.02;      // per-step gripper displacement clamp (m)
  double tip_radius = 0.015;   // fingertip contact radius (m)
  double grasp_threshold = 0.5;
  double grasp_radius = 0.03;
  double expert_step = 0.01;   // scripted expert speed (m / step)
  double expert_jitter = 0.02; // sigma as a fraction of expert_step
  int expert_max_steps = 200;
  // Initial-state randomization (uniform half-widths, meters).
  Vec3 object_nominal = Vec3(0.0, 0.0, 0.0);
  Eigen::Vector2d object_range = Eigen::Vector2d(0.06, 0.04);
  Vec3 gripper_offset = Vec3(0.0, -0.16, 0.10);  // relative to nominal object
  Vec3 gripper_range = Vec3(0.04, 0.02, 0.02);

  // 45 degree downward tilt, mounted 5 cm behind and 10 cm above the tip.
  static HandEyeCalib default_hand_eye();
  // Task defaults: push uses a soft bag, pick a rigid block.
  static EnvConfig for_task(TaskId task);
};

// Canonical orientation used by every scripted controller.
Quat nominal_orientation();

Box3 target_region(const EnvConfig& cfg);

// Samples a solvable initial state for the configured task.
EnvState sample_initial_state(const EnvConfig& cfg, Rng& rng);

Frame render(const EnvState& state, const CameraIntrinsics& k,
             const HandEyeCalib& calib);
Frame render(const EnvState& state, const EnvConfig& cfg);

EnvState step(const EnvState& state, const Action& a,
              const EnvConfig& cfg = EnvConfig{});

bool success(const EnvState& state, TaskId task);

struct ExpertResult {
  std::optional<Trajectory> trajectory;  // present only on success
  std::string failure;
  EnvState final_state;
};

ExpertResult scripted_expert(const EnvState& init, const EnvConfig& cfg,
                             std::uint64_t noise_seed);

// Goal-agnostic random walk; episodes of `episode_length` steps over fresh
// scenes until `n_steps` transitions are collected.
std::vector<Trajectory> collect_play_data(int n_steps, std::uint64_t seed,
                                          const EnvConfig& cfg,
                                          int episode_length = 50,
                                          double contact_bias = 0.3);

// States s_0..s_n visited while replaying the trajectory's actions from its
// initial state (s_i is the state at which step i's frame was observed).
std::vector<EnvState> replay_states(const Trajectory& traj,
                                    const EnvConfig& cfg);

// Object displacement caused by a step (0 when the object did not move).
double contact_displacement(const EnvState& before, const EnvState& after);

}  // namespace wmdagger

#endif  // WMDAGGER_ENVSIM_H_
