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

#include "wmdagger/config.h"

#include <set>

#include "json.hpp"
#include "wmdagger/filtering.h"
#include "wmdagger/storage.h"

namespace wmdagger {

using nlohmann::json;

namespace {

// --- value conversions ------------------------------------------------------

template <typename T>
struct Codec;

template <>
struct Codec<int> {
  static json put(int v) { return v; }
  static int get(const json& j) {
    if (!j.is_number_integer()) throw std::invalid_argument("expected an integer");
    return j.get<int>();
  }
};

template <>
struct Codec<std::uint64_t> {
  static json put(std::uint64_t v) { return v; }
  static std::uint64_t get(const json& j) {
    if (!j.is_number_unsigned()) {
      throw std::invalid_argument("expected a non-negative integer");
    }
    return j.get<std::uint64_t>();
  }
};

template <>
struct Codec<double> {
  static json put(double v) { return v; }
  static double get(const json& j) {
    if (!j.is_number()) throw std::invalid_argument("expected a number");
    return j.get<double>();
  }
};

template <>
struct Codec<bool> {
  static json put(bool v) { return v; }
  static bool get(const json& j) {
    if (!j.is_boolean()) throw std::invalid_argument("expected true or false");
    return j.get<bool>();
  }
};

template <>
struct Codec<std::string> {
  static json put(const std::string& v) { return v; }
  static std::string get(const json& j) {
    if (!j.is_string()) throw std::invalid_argument("expected a string");
    return j.get<std::string>();
  }
};

template <typename T>
struct Codec<std::vector<T>> {
  static json put(const std::vector<T>& v) {
    json j = json::array();
    for (const auto& x : v) j.push_back(Codec<T>::put(x));
    return j;
  }
  static std::vector<T> get(const json& j) {
    if (!j.is_array()) throw std::invalid_argument("expected an array");
    std::vector<T> out;
    for (const auto& x : j) out.push_back(Codec<T>::get(x));
    return out;
  }
};

template <>
struct Codec<Vec3> {
  static json put(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
  static Vec3 get(const json& j) {
    const auto v = Codec<std::vector<double>>::get(j);
    if (v.size() != 3) throw std::invalid_argument("expected 3 numbers");
    return Vec3(v[0], v[1], v[2]);
  }
};

template <>
struct Codec<Eigen::Vector2d> {
  static json put(const Eigen::Vector2d& v) { return json::array({v.x(), v.y()}); }
  static Eigen::Vector2d get(const json& j) {
    const auto v = Codec<std::vector<double>>::get(j);
    if (v.size() != 2) throw std::invalid_argument("expected 2 numbers");
    return Eigen::Vector2d(v[0], v[1]);
  }
};

template <>
struct Codec<Mat3> {
  static json put(const Mat3& m) {
    json j = json::array();
    for (int r = 0; r < 3; ++r) j.push_back(Codec<Vec3>::put(m.row(r).transpose()));
    return j;
  }
  static Mat3 get(const json& j) {
    if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected 3 rows");
    Mat3 m;
    for (int r = 0; r < 3; ++r) m.row(r) = Codec<Vec3>::get(j[r]).transpose();
    return m;
  }
};

// Enums travel as strings.
template <typename E, std::string (*ToS)(E), E (*FromS)(const std::string&)>
struct EnumCodec {
  static json put(E v) { return ToS(v); }
  static E get(const json& j) {
    try {
      return FromS(Codec<std::string>::get(j));
    } catch (const InvalidInput& e) {
      throw std::invalid_argument(e.what());
    }
  }
};

std::string wm_kind_to_string(WorldModelKind k) {
  return k == WorldModelKind::kOracle ? "oracle" : "flow";
}
WorldModelKind wm_kind_from_string(const std::string& s) {
  if (s == "oracle") return WorldModelKind::kOracle;
  if (s == "flow") return WorldModelKind::kFlow;
  throw InvalidInput("unknown world model '" + s + "' (oracle|flow)");
}
std::string task_s(TaskId t) { return to_string(t); }
std::string kind_s(ObjectKind k) { return to_string(k); }
std::string act_s(Activation a) { return to_string(a); }
std::string weight_s(FlowWeighting w) { return to_string(w); }

template <>
struct Codec<TaskId> : EnumCodec<TaskId, task_s, task_from_string> {};
template <>
struct Codec<ObjectKind> : EnumCodec<ObjectKind, kind_s, object_kind_from_string> {};
template <>
struct Codec<Activation> : EnumCodec<Activation, act_s, activation_from_string> {};
template <>
struct Codec<FlowWeighting>
    : EnumCodec<FlowWeighting, weight_s, flow_weighting_from_string> {};
template <>
struct Codec<WorldModelKind>
    : EnumCodec<WorldModelKind, wm_kind_to_string, wm_kind_from_string> {};

// --- archives ---------------------------------------------------------------

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

class ReadArchive {
 public:
  ReadArchive(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <typename T>
  void field(const std::string& key, T& value) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      value = Codec<T>::get(*it);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(join(path_, key), e.what());
    }
  }

  template <typename F>
  void section(const std::string& key, F&& fn) {
    used_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    ReadArchive child(*it, join(path_, key));
    fn(child);
    child.finish();
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw ConfigError(join(path_, key), "unknown key");
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

class WriteArchive {
 public:
  template <typename T>
  void field(const std::string& key, T& value) {
    j_[key] = Codec<T>::put(value);
  }
  template <typename F>
  void section(const std::string& key, F&& fn) {
    WriteArchive child;
    fn(child);
    j_[key] = std::move(child.j_);
  }
  json& result() { return j_; }

 private:
  json j_ = json::object();
};

template <typename A>
void visit_env(A& a, EnvConfig& e) {
  a.field("object", e.object);
  a.field("softness", e.softness);
  a.section("intrinsics", [&](A& s) {
    s.field("fx", e.intrinsics.fx);
    s.field("fy", e.intrinsics.fy);
    s.field("cx", e.intrinsics.cx);
    s.field("cy", e.intrinsics.cy);
    s.field("width", e.intrinsics.width);
    s.field("height", e.intrinsics.height);
  });
  a.section("hand_eye", [&](A& s) {
    s.field("rotation", e.calib.rotation);
    s.field("translation", e.calib.translation);
  });
  a.section("workspace", [&](A& s) {
    s.field("lo", e.workspace.lo);
    s.field("hi", e.workspace.hi);
  });
  a.field("max_step", e.max_step);
  a.field("tip_radius", e.tip_radius);
  a.field("grasp_threshold", e.grasp_threshold);
  a.field("grasp_radius", e.grasp_radius);
  a.field("expert_step", e.expert_step);
  a.field("expert_jitter", e.expert_jitter);
  a.field("expert_max_steps", e.expert_max_steps);
  a.field("object_nominal", e.object_nominal);
  a.field("object_range", e.object_range);
  a.field("gripper_offset", e.gripper_offset);
  a.field("gripper_range", e.gripper_range);
}

template <typename A>
void visit_flow(A& a, FlowConfig& f) {
  a.field("history", f.history);
  a.field("max_horizon", f.max_horizon);
  a.field("latent_stride", f.latent_stride);
  a.field("hidden", f.hidden);
  a.field("activation", f.activation);
  a.field("weighting", f.weighting);
  a.field("steps", f.steps);
  a.field("batch", f.batch);
  a.field("lr", f.lr);
  a.field("sample_steps", f.sample_steps);
  a.field("heldout_fraction", f.heldout_fraction);
  a.field("eval_every", f.eval_every);
}

template <typename A>
void visit_body(A& a, RunConfig& c) {
  a.field("seed", c.seed);
  a.field("n_demos", c.n_demos);
  a.section("env", [&](A& s) { visit_env(s, c.env); });
  a.section("world_model", [&](A& s) {
    s.field("kind", c.world_model.kind);
    s.field("play_steps", c.world_model.play_steps);
    s.section("hallucination", [&](A& h) {
      h.field("amplitude", c.world_model.hallucination.amplitude);
      h.field("drift", c.world_model.hallucination.drift);
      h.field("corruption_prob", c.world_model.hallucination.corruption_prob);
    });
    s.section("flow", [&](A& f) { visit_flow(f, c.world_model.flow); });
  });
  a.section("synthesis", [&](A& s) {
    SynthesisConfig& y = c.synthesis;
    s.field("k", y.k);
    s.field("angle_deg", y.angle_deg);
    s.field("history", y.history);
    s.field("pivot_margin", y.pivot_margin);
    s.field("episodes", y.episodes);
    s.field("directional_constraint", y.directional_constraint);
    s.field("min_expert_motion", y.min_expert_motion);
    s.field("gripper_guard", y.gripper_guard);
    s.field("direction_budget", y.direction_budget);
    s.field("pivot_budget", y.pivot_budget);
  });
  a.section("filtering", [&](A& s) {
    s.field("enabled", c.filtering.enabled);
    s.field("embedding_dim", c.filtering.embedding_dim);
  });
  a.section("policy", [&](A& s) {
    PolicyConfig& p = c.policy;
    s.field("horizon", p.horizon);
    s.field("stride", p.stride);
    s.field("obs_size", p.obs_size);
    s.field("hidden", p.hidden);
    s.field("activation", p.activation);
    s.field("steps", p.steps);
    s.field("batch", p.batch);
    s.field("lr", p.lr);
    s.field("heldout_fraction", p.heldout_fraction);
    s.field("eval_every", p.eval_every);
  });
  a.section("eval", [&](A& s) {
    s.field("trials", c.eval.trials);
    s.field("max_steps", c.eval.max_steps);
  });
  a.section("experiment", [&](A& s) {
    ExperimentSettings& x = c.experiment;
    s.field("seeds", x.seeds);
    s.field("n_demos", x.n_demos);
    s.field("methods", x.methods);
    s.field("ablation_n_demos", x.ablation_n_demos);
    s.field("scaling_episodes", x.scaling_episodes);
    s.field("scaling_n_demos", x.scaling_n_demos);
    s.field("alpha", x.alpha);
    s.field("gate_trials", x.gate_trials);
    s.field("gate_min_success", x.gate_min_success);
    s.field("save_datasets", x.save_datasets);
    s.field("save_checkpoints", x.save_checkpoints);
  });
}

json to_tree(const RunConfig& cfg) {
  RunConfig copy = cfg;
  WriteArchive w;
  w.field("task", copy.task);
  visit_body(w, copy);
  return std::move(w.result());
}

RunConfig from_tree(const json& j) {
  ReadArchive r(j, "");
  TaskId task = TaskId::kPush;
  r.field("task", task);
  RunConfig cfg = default_config(task);
  visit_body(r, cfg);
  r.finish();
  validate(cfg);
  return cfg;
}

const std::set<std::string>& known_methods() {
  static const std::set<std::string> m = {"bc", "dmd_lite", "wm_dagger",
                                          "wm_dagger_no_dir", "wm_dagger_no_filter"};
  return m;
}

}  // namespace

RunConfig default_config(TaskId task) {
  RunConfig cfg;
  cfg.task = task;
  cfg.env = EnvConfig::for_task(task);
  return cfg;
}

void validate(const RunConfig& c) {
  auto require = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw ConfigError(key, msg);
  };
  try {
    validate(c.env.intrinsics);
    validate(c.env.calib);
  } catch (const InvalidInput& e) {
    throw ConfigError("env", e.what());
  }
  require(c.n_demos >= 1, "n_demos", "must be >= 1");
  require(c.synthesis.k >= 1, "synthesis.k", "must be >= 1");
  require(c.synthesis.angle_deg > 90.0 && c.synthesis.angle_deg <= 180.0,
          "synthesis.angle_deg", "must lie in (90, 180]");
  require(c.synthesis.history >= 1, "synthesis.history", "must be >= 1");
  require(c.synthesis.pivot_margin >= c.synthesis.history, "synthesis.pivot_margin",
          "must be >= synthesis.history");
  require(c.synthesis.episodes >= 0, "synthesis.episodes", "must be >= 0");
  require(c.synthesis.direction_budget >= 1, "synthesis.direction_budget", "must be >= 1");
  require(c.synthesis.pivot_budget >= 1, "synthesis.pivot_budget", "must be >= 1");
  try {
    validate(c.world_model.hallucination);
  } catch (const InvalidInput& e) {
    throw ConfigError("world_model.hallucination", e.what());
  }
  require(c.world_model.flow.history >= 1, "world_model.flow.history", "must be >= 1");
  require(c.world_model.flow.latent_stride >= 1 &&
              c.env.intrinsics.width % c.world_model.flow.latent_stride == 0 &&
              c.env.intrinsics.height % c.world_model.flow.latent_stride == 0,
          "world_model.flow.latent_stride", "must divide the image size");
  require(c.world_model.play_steps >= 0, "world_model.play_steps", "must be >= 0");
  require(c.filtering.embedding_dim >= HandcraftedEmbedder::kFeatures,
          "filtering.embedding_dim",
          "must be >= " + std::to_string(HandcraftedEmbedder::kFeatures));
  require(c.policy.horizon >= 1, "policy.horizon", "must be >= 1");
  require(c.policy.stride >= 1 && c.policy.stride <= c.policy.horizon, "policy.stride",
          "must lie in [1, policy.horizon]");
  require(c.policy.obs_size >= 1 && c.env.intrinsics.width % c.policy.obs_size == 0 &&
              c.env.intrinsics.height % c.policy.obs_size == 0,
          "policy.obs_size", "must divide the image size");
  require(c.policy.steps >= 0, "policy.steps", "must be >= 0");
  require(c.policy.batch >= 1, "policy.batch", "must be >= 1");
  require(c.eval.trials >= 1, "eval.trials", "must be >= 1");
  require(c.eval.max_steps >= 1, "eval.max_steps", "must be >= 1");
  require(!c.experiment.seeds.empty(), "experiment.seeds", "must not be empty");
  for (int n : c.experiment.n_demos) require(n >= 1, "experiment.n_demos", "entries must be >= 1");
  for (const auto& m : c.experiment.methods) {
    require(known_methods().count(m) > 0, "experiment.methods", "unknown method '" + m + "'");
  }
  for (int e : c.experiment.scaling_episodes) {
    require(e >= 1, "experiment.scaling_episodes", "entries must be >= 1");
  }
  require(c.experiment.alpha > 0.0 && c.experiment.alpha < 1.0, "experiment.alpha",
          "must lie in (0, 1)");
  require(c.experiment.gate_trials >= 1, "experiment.gate_trials", "must be >= 1");
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
  }
  return from_tree(j);
}

std::string config_to_json(const RunConfig& cfg) { return to_tree(cfg).dump(2) + "\n"; }

RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::string>& overrides) {
  json tree = to_tree(cfg);
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(o, "override must look like key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &tree;
    size_t start = 0;
    while (true) {
      const size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (!node->is_object() || !node->contains(part)) throw ConfigError(key, "unknown key");
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (key == "task") {
      // A task switch resets the task-dependent defaults.
      json fresh = to_tree(default_config(Codec<TaskId>::get(value)));
      fresh["seed"] = tree["seed"];
      tree = std::move(fresh);
    } else {
      *node = std::move(value);
    }
  }
  return from_tree(tree);
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingInput("config file not found: " + path.string());
  return config_from_json(read_text(path));
}

std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a64(to_tree(cfg).dump()); }

}  // namespace wmdagger
