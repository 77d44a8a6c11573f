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

#include "wmdagger/storage.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace wmdagger {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kCheckpointMagic[8] = {'W', 'M', 'D', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    if constexpr (sizeof(T) == 4) return __builtin_bswap32(v);
    else return __builtin_bswap64(v);
  }
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(to_little(v)); }
  void u64(std::uint64_t v) { raw(to_little(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, size_t n) { buf_.append(p, n); }
  const std::string& data() const { return buf_; }
  size_t size() const { return buf_.size(); }

 private:
  template <typename T>
  void raw(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, size_t pos, size_t end)
      : buf_(buf), pos_(pos), end_(end) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf_[pos_++]);
  }
  std::uint32_t u32() { return to_little(raw<std::uint32_t>()); }
  std::uint64_t u64() { return to_little(raw<std::uint64_t>()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  void bytes(char* p, size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  size_t remaining() const { return end_ - pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > end_) throw IntegrityError("unexpected end of binary data");
  }
  template <typename T>
  T raw() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const std::string& buf_;
  size_t pos_, end_;
};

std::string read_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_binary_atomic(const fs::path& path, const std::string& data) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_action(Writer& w, const Action& a) {
  for (double v : a.to_array()) w.f64(v);
}

Action read_action(Reader& r) {
  std::array<double, Action::kDim> v;
  for (double& x : v) x = r.f64();
  return Action::from_array(v);
}

void write_frame(Writer& w, const Frame& f) {
  for (float v : f.pixels) w.f32(v);
}

Frame read_frame(Reader& r, int h, int wd, int c) {
  Frame f(h, wd, c);
  for (float& v : f.pixels) v = r.f32();
  return f;
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vec3 vec_from(const json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

json state_json(const EnvState& s) {
  json j;
  j["object_position"] = vec_json(s.scene.object_position);
  j["object_kind"] = to_string(s.scene.kind);
  j["softness"] = s.scene.softness;
  j["object_half_extent"] = vec_json(s.scene.object_half_extent);
  j["target_lo"] = vec_json(s.scene.target.lo);
  j["target_hi"] = vec_json(s.scene.target.hi);
  j["table_height"] = s.scene.table_height;
  j["texture_seed"] = s.scene.texture_seed;
  j["gripper"] = s.gripper.to_array();
  j["held"] = s.held;
  j["step_count"] = s.step_count;
  j["grasp_offset"] = vec_json(s.grasp_offset);
  j["squash"] = s.squash;
  j["clamped"] = s.clamped;
  return j;
}

EnvState state_from(const json& j) {
  EnvState s;
  s.scene.object_position = vec_from(j.at("object_position"));
  s.scene.kind = object_kind_from_string(j.at("object_kind").get<std::string>());
  s.scene.softness = j.at("softness").get<double>();
  s.scene.object_half_extent = vec_from(j.at("object_half_extent"));
  s.scene.target.lo = vec_from(j.at("target_lo"));
  s.scene.target.hi = vec_from(j.at("target_hi"));
  s.scene.table_height = j.at("table_height").get<double>();
  s.scene.texture_seed = j.at("texture_seed").get<std::uint64_t>();
  const auto g = j.at("gripper").get<std::vector<double>>();
  if (g.size() != Action::kDim) throw IntegrityError("gripper state must have 8 values");
  s.gripper = Action::from_array(g);
  s.held = j.at("held").get<bool>();
  s.step_count = j.at("step_count").get<int>();
  s.grasp_offset = vec_from(j.at("grasp_offset"));
  s.squash = j.at("squash").get<double>();
  s.clamped = j.at("clamped").get<bool>();
  return s;
}

std::uint64_t record_bytes(std::uint64_t steps, std::uint64_t frame_values,
                           bool terminal) {
  return steps * (2 * Action::kDim * 8 + frame_values * 4 + 1) +
         (terminal ? frame_values * 4 : 0);
}

json manifest_json(const DatasetManifest& m) {
  json j;
  j["format_version"] = m.version;
  j["task"] = to_string(m.task);
  j["resolution"] = {{"height", m.height}, {"width", m.width}, {"channels", m.channels}};
  j["counts"] = {{"expert", m.expert_count},
                 {"play", m.play_count},
                 {"synthesized", m.synthesized_count}};
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  j["trajectories"] = json::array();
  for (const auto& e : m.index) {
    json t;
    t["id"] = e.id;
    t["provenance"] = to_string(e.provenance);
    t["task"] = to_string(e.task);
    t["offset"] = e.offset;
    t["length"] = e.length;
    t["steps"] = e.steps;
    t["source_id"] = e.source_id;
    t["pivot"] = e.pivot;
    t["deviation_direction"] = vec_json(e.deviation_direction);
    t["has_terminal_frame"] = e.has_terminal_frame;
    if (e.initial_state) t["initial_state"] = state_json(*e.initial_state);
    j["trajectories"].push_back(std::move(t));
  }
  return j;
}

DatasetManifest manifest_from(const json& j) {
  DatasetManifest m;
  m.version = j.at("format_version").get<int>();
  if (m.version != kDatasetFormatVersion) {
    throw UnsupportedVersion("dataset format version " + std::to_string(m.version) +
                             " is not supported (expected " +
                             std::to_string(kDatasetFormatVersion) + ")");
  }
  m.task = task_from_string(j.at("task").get<std::string>());
  const json& res = j.at("resolution");
  m.height = res.at("height").get<int>();
  m.width = res.at("width").get<int>();
  m.channels = res.at("channels").get<int>();
  const json& counts = j.at("counts");
  m.expert_count = counts.at("expert").get<std::uint64_t>();
  m.play_count = counts.at("play").get<std::uint64_t>();
  m.synthesized_count = counts.at("synthesized").get<std::uint64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::uint64_t>();
  for (const json& t : j.at("trajectories")) {
    TrajectoryIndexEntry e;
    e.id = t.at("id").get<std::int64_t>();
    e.provenance = provenance_from_string(t.at("provenance").get<std::string>());
    e.task = task_from_string(t.at("task").get<std::string>());
    e.offset = t.at("offset").get<std::uint64_t>();
    e.length = t.at("length").get<std::uint64_t>();
    e.steps = t.at("steps").get<std::uint64_t>();
    e.source_id = t.at("source_id").get<std::int64_t>();
    e.pivot = t.at("pivot").get<int>();
    e.deviation_direction = vec_from(t.at("deviation_direction"));
    e.has_terminal_frame = t.at("has_terminal_frame").get<bool>();
    if (t.contains("initial_state")) e.initial_state = state_from(t.at("initial_state"));
    m.index.push_back(std::move(e));
  }
  return m;
}

void check_manifest(const DatasetManifest& m, std::uint64_t blob_size) {
  if (m.height < 0 || m.width < 0 || m.channels < 1) {
    throw IntegrityError("manifest resolution is invalid");
  }
  const std::uint64_t frame_values =
      static_cast<std::uint64_t>(m.height) * m.width * m.channels;
  std::uint64_t counts[3] = {0, 0, 0};
  std::uint64_t end = 0;
  for (size_t i = 0; i < m.index.size(); ++i) {
    const auto& e = m.index[i];
    if (i > 0 && e.offset < end) {
      throw IntegrityError("trajectory " + std::to_string(e.id) +
                           " overlaps the previous record");
    }
    if (e.length != record_bytes(e.steps, frame_values, e.has_terminal_frame)) {
      throw IntegrityError("trajectory " + std::to_string(e.id) +
                           " length does not match its step count");
    }
    end = e.offset + e.length;
    if (end > blob_size) {
      throw IntegrityError("data.bin is truncated (" + std::to_string(blob_size) +
                           " bytes, manifest needs " + std::to_string(end) + ")");
    }
    ++counts[static_cast<int>(e.provenance)];
  }
  if (counts[0] != m.expert_count || counts[1] != m.play_count ||
      counts[2] != m.synthesized_count) {
    throw IntegrityError("manifest counts do not match its index");
  }
  if (end != blob_size) {
    throw IntegrityError("data.bin size " + std::to_string(blob_size) +
                         " does not match the manifest (" + std::to_string(end) + ")");
  }
}

}  // namespace

DatasetManifest save_dataset(const std::vector<Trajectory>& trajectories,
                             const fs::path& dir, std::uint64_t seed,
                             std::uint64_t config_hash) {
  DatasetManifest m;
  m.seed = seed;
  m.config_hash = config_hash;
  bool have_shape = false;
  Writer w;
  for (const Trajectory& t : trajectories) {
    for (const Step& s : t.steps) {
      if (!have_shape) {
        m.height = s.frame.height;
        m.width = s.frame.width;
        m.channels = s.frame.channels;
        m.task = t.task;
        have_shape = true;
      } else if (s.frame.height != m.height || s.frame.width != m.width ||
                 s.frame.channels != m.channels) {
        throw InvalidInput("all frames in a dataset must share one resolution");
      }
    }
    if (t.terminal_frame && have_shape &&
        (t.terminal_frame->height != m.height || t.terminal_frame->width != m.width)) {
      throw InvalidInput("terminal frame resolution differs from the dataset");
    }
  }
  const std::uint64_t frame_values =
      static_cast<std::uint64_t>(m.height) * m.width * m.channels;
  for (const Trajectory& t : trajectories) {
    const bool terminal = t.terminal_frame.has_value() && !t.steps.empty();
    TrajectoryIndexEntry e;
    e.id = t.id;
    e.provenance = t.provenance;
    e.task = t.task;
    e.offset = w.size();
    e.steps = t.steps.size();
    e.source_id = t.source_id;
    e.pivot = t.pivot;
    e.deviation_direction = t.deviation_direction;
    e.has_terminal_frame = terminal;
    e.initial_state = t.initial_state;
    for (const Step& s : t.steps) write_action(w, s.pose);
    for (const Step& s : t.steps) write_action(w, s.action);
    for (const Step& s : t.steps) write_frame(w, s.frame);
    if (terminal) write_frame(w, *t.terminal_frame);
    for (const Step& s : t.steps) w.u8(static_cast<std::uint8_t>(s.phase));
    e.length = w.size() - e.offset;
    if (e.length != record_bytes(e.steps, frame_values, terminal)) {
      throw InvalidInput("trajectory " + std::to_string(t.id) +
                         " has frames of the wrong size");
    }
    switch (t.provenance) {
      case Provenance::kExpert: ++m.expert_count; break;
      case Provenance::kPlay: ++m.play_count; break;
      case Provenance::kSynthesized: ++m.synthesized_count; break;
    }
    m.index.push_back(std::move(e));
  }
  fs::create_directories(dir);
  write_binary_atomic(dir / "data.bin", w.data());
  write_text_atomic(dir / "manifest.json", manifest_json(m).dump(2) + "\n");
  return m;
}

DatasetManifest load_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw MissingInput("no dataset manifest at " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
    return manifest_from(j);
  } catch (const json::exception& e) {
    throw IntegrityError("malformed manifest " + path.string() + ": " + e.what());
  }
}

std::vector<Trajectory> load_dataset(const fs::path& dir, DatasetManifest* out) {
  const DatasetManifest m = load_manifest(dir);
  const std::string blob = read_binary(dir / "data.bin");
  check_manifest(m, blob.size());
  std::vector<Trajectory> trajs;
  trajs.reserve(m.index.size());
  for (const auto& e : m.index) {
    Reader r(blob, e.offset, e.offset + e.length);
    Trajectory t;
    t.id = e.id;
    t.provenance = e.provenance;
    t.task = e.task;
    t.source_id = e.source_id;
    t.pivot = e.pivot;
    t.deviation_direction = e.deviation_direction;
    t.initial_state = e.initial_state;
    t.steps.resize(e.steps);
    for (Step& s : t.steps) s.pose = read_action(r);
    for (Step& s : t.steps) s.action = read_action(r);
    for (Step& s : t.steps) s.frame = read_frame(r, m.height, m.width, m.channels);
    if (e.has_terminal_frame) t.terminal_frame = read_frame(r, m.height, m.width, m.channels);
    for (Step& s : t.steps) {
      const std::uint8_t p = r.u8();
      if (p > static_cast<std::uint8_t>(Phase::kRecovery)) {
        throw IntegrityError("unknown phase tag in trajectory " + std::to_string(e.id));
      }
      s.phase = static_cast<Phase>(p);
    }
    trajs.push_back(std::move(t));
  }
  if (out != nullptr) *out = m;
  return trajs;
}

// --- Checkpoints ------------------------------------------------------------

namespace {

void write_header(Writer& w, CheckpointType type, std::uint64_t hash,
                  const Mlp& mlp, std::initializer_list<std::uint32_t> extra) {
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointFormatVersion);
  w.u32(static_cast<std::uint32_t>(type));
  w.u64(hash);
  w.u32(static_cast<std::uint32_t>(extra.size()));
  for (auto v : extra) w.u32(v);
  w.u32(static_cast<std::uint32_t>(mlp.activation()));
  w.u32(static_cast<std::uint32_t>(mlp.sizes().size()));
  for (int s : mlp.sizes()) w.u32(static_cast<std::uint32_t>(s));
}

struct Header {
  std::vector<std::uint32_t> extra;
  Activation activation = Activation::kTanh;
  std::vector<int> sizes;
};

Header read_header(Reader& r, CheckpointType type, std::uint64_t expected_hash,
                   const fs::path& path) {
  char magic[sizeof(kCheckpointMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw IntegrityError(path.string() + " is not a checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointFormatVersion) {
    throw UnsupportedVersion("checkpoint version " + std::to_string(version) +
                             " is not supported");
  }
  if (r.u32() != static_cast<std::uint32_t>(type)) {
    throw IntegrityError(path.string() + " holds a different model type");
  }
  const std::uint64_t hash = r.u64();
  if (expected_hash != 0 && hash != expected_hash) {
    throw IntegrityError(path.string() + " was trained with a different config");
  }
  Header h;
  const std::uint32_t n_extra = r.u32();
  if (n_extra > 16) throw IntegrityError("corrupt checkpoint shape block");
  for (std::uint32_t i = 0; i < n_extra; ++i) h.extra.push_back(r.u32());
  const std::uint32_t act = r.u32();
  if (act > static_cast<std::uint32_t>(Activation::kRelu)) {
    throw IntegrityError("unknown activation in checkpoint");
  }
  h.activation = static_cast<Activation>(act);
  const std::uint32_t n_sizes = r.u32();
  if (n_sizes < 2 || n_sizes > 64) throw IntegrityError("corrupt checkpoint shape block");
  for (std::uint32_t i = 0; i < n_sizes; ++i) h.sizes.push_back(static_cast<int>(r.u32()));
  return h;
}

void write_values(Writer& w, std::span<const double> values) {
  w.u64(values.size());
  for (double v : values) w.f32(static_cast<float>(v));
}

std::vector<double> read_values(Reader& r, size_t expected) {
  const std::uint64_t n = r.u64();
  if (n != expected) throw IntegrityError("checkpoint parameter count mismatch");
  std::vector<double> v(n);
  for (double& x : v) x = r.f32();
  return v;
}

}  // namespace

void save_policy(const PolicyNet& net, const fs::path& path,
                 std::uint64_t config_hash) {
  Writer w;
  write_header(w, CheckpointType::kPolicy, config_hash, net.mlp(),
               {static_cast<std::uint32_t>(net.obs_size()),
                static_cast<std::uint32_t>(net.horizon())});
  write_values(w, net.flat_params());
  write_binary_atomic(path, w.data());
}

PolicyNet load_policy(const fs::path& path, std::uint64_t expected_hash) {
  const std::string blob = read_binary(path);
  Reader r(blob, 0, blob.size());
  const Header h = read_header(r, CheckpointType::kPolicy, expected_hash, path);
  if (h.extra.size() != 2) throw IntegrityError("corrupt policy shape block");
  const int obs = static_cast<int>(h.extra[0]);
  const int horizon = static_cast<int>(h.extra[1]);
  if (h.sizes.front() != obs * obs || h.sizes.back() != horizon * Action::kDim) {
    throw IntegrityError("policy shape block is inconsistent");
  }
  PolicyNet net(obs, horizon,
                std::vector<int>(h.sizes.begin() + 1, h.sizes.end() - 1),
                h.activation);
  net.set_flat_params(read_values(r, net.flat_params().size()));
  if (r.remaining() != 0) throw IntegrityError("trailing bytes in " + path.string());
  return net;
}

void save_flow(const FlowNet& net, const fs::path& path, std::uint64_t config_hash) {
  Writer w;
  write_header(w, CheckpointType::kFlow, config_hash, net.mlp(),
               {static_cast<std::uint32_t>(net.latent_dim()),
                static_cast<std::uint32_t>(net.context_frames())});
  write_values(w, net.mlp().params());
  write_binary_atomic(path, w.data());
}

FlowNet load_flow(const fs::path& path, std::uint64_t expected_hash) {
  const std::string blob = read_binary(path);
  Reader r(blob, 0, blob.size());
  const Header h = read_header(r, CheckpointType::kFlow, expected_hash, path);
  if (h.extra.size() != 2) throw IntegrityError("corrupt flow shape block");
  FlowNet net(static_cast<int>(h.extra[0]), static_cast<int>(h.extra[1]),
              std::vector<int>(h.sizes.begin() + 1, h.sizes.end() - 1),
              h.activation);
  if (net.mlp().sizes() != h.sizes) {
    throw IntegrityError("flow shape block is inconsistent");
  }
  net.mlp().params() = read_values(r, net.mlp().params().size());
  if (r.remaining() != 0) throw IntegrityError("trailing bytes in " + path.string());
  return net;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_binary_atomic(path, text);
}

std::string read_text(const fs::path& path) { return read_binary(path); }

}  // namespace wmdagger
