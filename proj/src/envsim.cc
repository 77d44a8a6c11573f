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

#include "wmdagger/envsim.h"

#include <algorithm>
#include <cmath>

#include "wmdagger/kernels.h"

namespace wmdagger {
namespace {

constexpr int kContactSubsteps = 4;
constexpr double kReachTolerance = 0.003;
constexpr double kSquashBand = 0.005;

double footprint_radius(const Scene& scene) {
  return std::max(scene.object_half_extent.x(), scene.object_half_extent.y());
}

double resting_height(const Scene& scene) {
  return scene.table_height + scene.object_half_extent.z();
}

// Circle-vs-circle push in the table plane.
// Open fingers straddle the object when the tip is within `straddle` of its
// vertical axis, so no push happens there.
void push_object(Scene& scene, const Vec3& tip, const Vec3& motion,
                 double tip_radius, double straddle) {
  const double top = scene.object_position.z() + scene.object_half_extent.z();
  if (tip.z() - tip_radius > top) return;
  const double reach = footprint_radius(scene) + tip_radius;
  Eigen::Vector2d d = scene.object_position.head<2>() - tip.head<2>();
  const double dist = d.norm();
  if (dist >= reach || dist < straddle) return;
  if (dist < 1e-12) {
    d = motion.head<2>();
    if (d.norm() < 1e-12) return;
  }
  d.normalize();
  // The object never moves further than the tip did in this substep, so a
  // tip dropping onto the object nudges it instead of teleporting it clear.
  const double push = std::min(reach - dist, motion.norm());
  if (push <= 0.0) return;
  scene.object_position.head<2>() += push * d;
}

// Bag deformation as a function of the current contact geometry: full
// squash when the tip touches the footprint, fading out over kSquashBand.
double bag_squash(const Scene& scene, const Vec3& tip, double tip_radius) {
  if (scene.kind != ObjectKind::kBag) return 0.0;
  const double top = scene.object_position.z() + scene.object_half_extent.z();
  if (tip.z() - tip_radius > top) return 0.0;
  const double reach = footprint_radius(scene) + tip_radius;
  const double dist = (scene.object_position.head<2>() - tip.head<2>()).norm();
  const double closeness = std::clamp((reach + kSquashBand - dist) / kSquashBand, 0.0, 1.0);
  return std::min(0.9, 0.4 * scene.softness) * closeness;
}

RenderScene make_render_scene(const EnvState& state) {
  const Scene& s = state.scene;
  RenderScene rs;
  rs.table_height = s.table_height;
  rs.texture_seed = s.texture_seed;
  rs.has_target = true;
  rs.target_lo = s.target.lo.head<2>();
  rs.target_hi = s.target.hi.head<2>();
  RenderPrimitive obj;
  obj.center = s.object_position;
  if (s.kind == ObjectKind::kBag) {
    obj.shape = RenderPrimitive::Shape::kEllipsoid;
    const double q = state.squash;
    obj.half_extent = s.object_half_extent.cwiseProduct(
        Vec3(1.0 + 0.5 * q, 1.0 - q, 1.0 - 0.3 * q));
    obj.albedo = 0.22;
  } else {
    obj.shape = RenderPrimitive::Shape::kBox;
    obj.half_extent = s.object_half_extent;
    obj.albedo = 0.3;
  }
  rs.object = obj;
  return rs;
}

Vec3 step_towards(const Vec3& from, const Vec3& goal, double max_len) {
  const Vec3 d = goal - from;
  const double n = d.norm();
  if (n <= max_len) return goal;
  return from + d * (max_len / n);
}

}  // namespace

std::string to_string(TaskId task) {
  return task == TaskId::kPush ? "push" : "pick";
}
std::string to_string(ObjectKind kind) {
  return kind == ObjectKind::kBag ? "bag" : "block";
}
std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::kExpert: return "expert";
    case Provenance::kPlay: return "play";
    case Provenance::kSynthesized: return "synthesized";
  }
  return "?";
}
std::string to_string(Phase p) {
  switch (p) {
    case Phase::kNone: return "none";
    case Phase::kDeviation: return "deviation";
    case Phase::kRecovery: return "recovery";
  }
  return "?";
}
TaskId task_from_string(const std::string& s) {
  if (s == "push") return TaskId::kPush;
  if (s == "pick") return TaskId::kPick;
  throw InvalidInput("unknown task '" + s + "'");
}
ObjectKind object_kind_from_string(const std::string& s) {
  if (s == "bag") return ObjectKind::kBag;
  if (s == "block") return ObjectKind::kBlock;
  throw InvalidInput("unknown object kind '" + s + "'");
}
Provenance provenance_from_string(const std::string& s) {
  if (s == "expert") return Provenance::kExpert;
  if (s == "play") return Provenance::kPlay;
  if (s == "synthesized") return Provenance::kSynthesized;
  throw InvalidInput("unknown provenance '" + s + "'");
}
Phase phase_from_string(const std::string& s) {
  if (s == "none") return Phase::kNone;
  if (s == "deviation") return Phase::kDeviation;
  if (s == "recovery") return Phase::kRecovery;
  throw InvalidInput("unknown phase '" + s + "'");
}

HandEyeCalib EnvConfig::default_hand_eye() {
  const double s = std::sin(M_PI / 4.0);
  const double c = std::cos(M_PI / 4.0);
  HandEyeCalib calib;
  calib.rotation.col(0) = Vec3(1.0, 0.0, 0.0);
  calib.rotation.col(1) = Vec3(0.0, -s, -c);
  calib.rotation.col(2) = Vec3(0.0, c, -s);
  calib.translation = Vec3(0.0, -0.05, 0.10);
  return calib;
}

EnvConfig EnvConfig::for_task(TaskId task) {
  EnvConfig cfg;
  cfg.task = task;
  if (task == TaskId::kPick) {
    cfg.object = ObjectKind::kBlock;
    cfg.softness = 0.0;
    cfg.object_nominal = Vec3(-0.06, 0.0, 0.0);
    cfg.object_range = Eigen::Vector2d(0.04, 0.03);
    cfg.gripper_offset = Vec3(0.0, -0.10, 0.12);
  }
  return cfg;
}

Quat nominal_orientation() { return Quat::Identity(); }

Box3 target_region(const EnvConfig& cfg) {
  if (cfg.task == TaskId::kPush) {
    return {Vec3(-0.25, 0.18, 0.0), Vec3(0.25, 0.30, 0.10)};
  }
  return {Vec3(0.08, 0.10, 0.0), Vec3(0.18, 0.20, 0.05)};
}

EnvState sample_initial_state(const EnvConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  EnvState s;
  s.scene.kind = cfg.object;
  s.scene.softness = cfg.softness;
  s.scene.object_half_extent = cfg.object == ObjectKind::kBag
                                   ? Vec3(0.04, 0.04, 0.03)
                                   : Vec3(0.025, 0.025, 0.025);
  s.scene.target = target_region(cfg);
  s.scene.table_height = 0.0;
  const double ox = cfg.object_nominal.x() + cfg.object_range.x() * unit(rng);
  const double oy = cfg.object_nominal.y() + cfg.object_range.y() * unit(rng);
  s.scene.object_position = Vec3(ox, oy, resting_height(s.scene));
  s.scene.texture_seed = rng();
  Vec3 g = cfg.object_nominal + cfg.gripper_offset;
  for (int i = 0; i < 3; ++i) g[i] += cfg.gripper_range[i] * unit(rng);
  s.gripper = Action::make(cfg.workspace.clamp(g), nominal_orientation(), 1.0);
  return s;
}

Frame render(const EnvState& state, const CameraIntrinsics& k,
             const HandEyeCalib& calib) {
  validate(k);
  const CameraPose pose = pose_from_action(state.gripper, calib);
  Frame frame(k.height, k.width, 1);
  kernels::omp::render(make_render_scene(state), pose, k, frame.pixels);
  return frame;
}

Frame render(const EnvState& state, const EnvConfig& cfg) {
  return render(state, cfg.intrinsics, cfg.calib);
}

EnvState step(const EnvState& s, const Action& a, const EnvConfig& cfg) {
  validate(a);
  EnvState n = s;
  n.step_count = s.step_count + 1;
  n.clamped = false;

  const Vec3 from = s.gripper.translation;
  Vec3 to = step_towards(from, a.translation, cfg.max_step);
  const Vec3 inside = cfg.workspace.clamp(to);
  if (inside != to) {
    n.clamped = true;
    to = inside;
  }

  const bool closing = a.gripper < cfg.grasp_threshold;
  const bool was_open = s.gripper.gripper >= cfg.grasp_threshold;
  if (!n.held && closing && was_open &&
      (from - s.scene.object_position).norm() < cfg.grasp_radius) {
    n.held = true;
    n.grasp_offset = s.scene.object_position - from;
  }

  const Vec3 motion = to - from;
  const Vec3 sub = motion / static_cast<double>(kContactSubsteps);
  for (int i = 1; i <= kContactSubsteps; ++i) {
    const Vec3 tip = from + motion * (static_cast<double>(i) / kContactSubsteps);
    if (n.held) {
      n.scene.object_position = tip + n.grasp_offset;
    } else {
      const double straddle = n.gripper.gripper >= cfg.grasp_threshold &&
                                      n.scene.kind == ObjectKind::kBlock
                                  ? cfg.grasp_radius
                                  : 0.0;
      push_object(n.scene, tip, sub, cfg.tip_radius, straddle);
    }
  }
  if (n.held && !closing) {
    n.held = false;
    n.grasp_offset = Vec3::Zero();
  }
  // Objects rest on (never sink into) the table.
  const double rest = resting_height(n.scene);
  if (!n.held) {
    n.scene.object_position.z() = rest;
  } else {
    n.scene.object_position.z() = std::max(n.scene.object_position.z(), rest);
  }

  n.squash = bag_squash(n.scene, to, cfg.tip_radius);

  n.gripper.translation = to;
  n.gripper.orientation = a.orientation;
  n.gripper.gripper = a.gripper;
  return n;
}

bool success(const EnvState& state, TaskId /*task*/) {
  return state.scene.target.contains(state.scene.object_position);
}

double contact_displacement(const EnvState& before, const EnvState& after) {
  return (after.scene.object_position - before.scene.object_position).norm();
}

namespace {

// Next goal of the scripted controller, or nullopt when the task is done.
struct ExpertPlan {
  Vec3 goal;
  double gripper;
};

class PushController {
 public:
  explicit PushController(const EnvConfig& cfg) : cfg_(cfg) {}

  ExpertPlan next(const EnvState& s) {
    const Scene& scene = s.scene;
    const Vec3 obj = scene.object_position;
    Eigen::Vector2d u = (scene.target.center() - obj).head<2>();
    u = u.norm() > 1e-9 ? Eigen::Vector2d(u.normalized()) : Eigen::Vector2d(0, 1);
    const double contact = footprint_radius(scene) + cfg_.tip_radius;
    const double z = std::max(cfg_.workspace.lo.z(), resting_height(scene));
    const Vec3 tip = s.gripper.translation;
    if (approaching_) {
      Vec3 goal;
      goal << obj.head<2>() - (contact + 0.02) * u, z;
      if ((goal - tip).norm() > kReachTolerance) return {goal, 1.0};
      approaching_ = false;
    }
    Vec3 goal;
    goal << obj.head<2>() - contact * u + 0.05 * u, z;
    return {goal, 1.0};
  }

 private:
  const EnvConfig& cfg_;
  bool approaching_ = true;
};

class PickController {
 public:
  explicit PickController(const EnvConfig& cfg) : cfg_(cfg) {}

  ExpertPlan next(const EnvState& s) {
    const Vec3 tip = s.gripper.translation;
    const Vec3 obj = s.scene.object_position;
    const Vec3 tgt = s.scene.target.center();
    const double carry_z = 0.12;
    const double half_z = s.scene.object_half_extent.z();
    auto reached = [&](const Vec3& g) { return (g - tip).norm() <= kReachTolerance; };
    for (;;) {
      switch (phase_) {
        case 0: {  // hover above the object
          const Vec3 g(obj.x(), obj.y(), obj.z() + half_z + 0.06);
          if (!reached(g)) return {g, 1.0};
          phase_ = 1;
          break;
        }
        case 1: {  // descend to the grasp point
          const Vec3 g = obj;
          if (!reached(g)) return {g, 1.0};
          phase_ = 2;
          break;
        }
        case 2:  // close in place
          phase_ = 3;
          return {tip, 0.0};
        case 3: {  // lift
          const Vec3 g(tip.x(), tip.y(), carry_z);
          if (!reached(g)) return {g, 0.0};
          phase_ = 4;
          break;
        }
        case 4: {  // carry over the target
          const Vec3 g(tgt.x(), tgt.y(), carry_z);
          if (!reached(g)) return {g, 0.0};
          phase_ = 5;
          break;
        }
        case 5: {  // lower, then release
          const Vec3 g(tgt.x(), tgt.y(), s.scene.table_height + half_z + 0.005);
          if (!reached(g)) return {g, 0.0};
          return {tip, 1.0};
        }
        default:
          return {tip, 1.0};
      }
    }
  }

 private:
  const EnvConfig& cfg_;
  int phase_ = 0;
};

template <typename Controller>
ExpertResult run_expert(Controller controller, const EnvState& init,
                        const EnvConfig& cfg, std::uint64_t noise_seed) {
  Rng rng = make_rng(noise_seed, streams::kJitter);
  std::normal_distribution<double> jitter(0.0, cfg.expert_jitter * cfg.expert_step);
  ExpertResult result;
  Trajectory traj;
  traj.provenance = Provenance::kExpert;
  traj.task = cfg.task;
  traj.initial_state = init;
  EnvState s = init;
  for (int t = 0; t < cfg.expert_max_steps; ++t) {
    if (success(s, cfg.task)) break;
    const ExpertPlan plan = controller.next(s);
    Vec3 target = step_towards(s.gripper.translation, plan.goal, cfg.expert_step);
    if (cfg.expert_jitter > 0.0) {
      target += Vec3(jitter(rng), jitter(rng), jitter(rng));
    }
    target = cfg.workspace.clamp(target);
    Step st;
    st.pose = s.gripper;
    st.frame = render(s, cfg);
    st.action = Action::make(target, nominal_orientation(), plan.gripper);
    s = step(s, st.action, cfg);
    traj.steps.push_back(std::move(st));
  }
  result.final_state = s;
  if (!success(s, cfg.task)) {
    result.failure = "scripted expert did not reach the goal within " +
                     std::to_string(cfg.expert_max_steps) + " steps";
    return result;
  }
  if (traj.steps.empty()) {
    result.failure = "initial state already satisfies the task";
    return result;
  }
  result.trajectory = std::move(traj);
  return result;
}

}  // namespace

ExpertResult scripted_expert(const EnvState& init, const EnvConfig& cfg,
                             std::uint64_t noise_seed) {
  if (cfg.task == TaskId::kPush) {
    return run_expert(PushController(cfg), init, cfg, noise_seed);
  }
  return run_expert(PickController(cfg), init, cfg, noise_seed);
}

std::vector<Trajectory> collect_play_data(int n_steps, std::uint64_t seed,
                                          const EnvConfig& cfg,
                                          int episode_length,
                                          double contact_bias) {
  if (n_steps <= 0) throw InvalidInput("play data needs n_steps > 0");
  if (episode_length <= 0) throw InvalidInput("episode_length must be positive");
  std::vector<Trajectory> out;
  Rng rng = make_rng(seed, streams::kPlay);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int remaining = n_steps;
  std::int64_t id = 0;
  while (remaining > 0) {
    Trajectory traj;
    traj.id = id++;
    traj.provenance = Provenance::kPlay;
    traj.task = cfg.task;
    EnvState s = sample_initial_state(cfg, rng);
    traj.initial_state = s;
    const int len = std::min(remaining, episode_length);
    for (int t = 0; t < len; ++t) {
      Vec3 dir;
      if (uni(rng) < contact_bias) {
        Vec3 aim = s.scene.object_position;
        aim.z() = std::max(cfg.workspace.lo.z(), resting_height(s.scene));
        dir = aim - s.gripper.translation;
        if (dir.norm() < 1e-9) dir = Vec3(0.0, 1.0, 0.0);
        dir.normalize();
      } else {
        dir = Vec3(gauss(rng), gauss(rng), gauss(rng)).normalized();
      }
      const double len_m = cfg.max_step * (0.3 + 0.7 * uni(rng));
      const Vec3 target = cfg.workspace.clamp(s.gripper.translation + len_m * dir);
      Step st;
      st.pose = s.gripper;
      st.frame = render(s, cfg);
      st.action = Action::make(target, nominal_orientation(), 1.0);
      s = step(s, st.action, cfg);
      traj.steps.push_back(std::move(st));
    }
    remaining -= len;
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<EnvState> replay_states(const Trajectory& traj,
                                    const EnvConfig& cfg) {
  if (!traj.initial_state) {
    throw InvalidInput("trajectory has no initial simulator state");
  }
  std::vector<EnvState> states;
  states.reserve(traj.size() + 1);
  states.push_back(*traj.initial_state);
  for (const Step& st : traj.steps) {
    states.push_back(step(states.back(), st.action, cfg));
  }
  return states;
}

}  // namespace wmdagger
