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

#include <fstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "test_util.h"
#include "wmdagger/storage.h"

namespace wmdagger {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

Trajectory make_trajectory(std::int64_t id, Provenance prov, int n, Rng& rng) {
  Trajectory t;
  t.id = id;
  t.provenance = prov;
  t.task = TaskId::kPush;
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (int i = 0; i < n; ++i) {
    Step s;
    s.pose = Action::make(Vec3(u(rng), u(rng), u(rng) + 0.3),
                          testing::random_quaternion(rng), 0.25 * (i % 5));
    s.action = Action::make(Vec3(u(rng), u(rng), u(rng) + 0.3),
                            testing::random_quaternion(rng), 1.0 / 3.0);
    s.frame = Frame(8, 12, 1);
    for (float& p : s.frame.pixels) p = static_cast<float>(u(rng) + 0.5);
    s.phase = prov == Provenance::kSynthesized ? Phase::kRecovery : Phase::kNone;
    t.steps.push_back(s);
  }
  if (prov == Provenance::kSynthesized) {
    t.source_id = 0;
    t.pivot = 3;
    t.deviation_direction = Vec3(1.0 / 3.0, -2.0 / 3.0, 2.0 / 3.0);
    t.terminal_frame = t.steps.back().frame;
    t.terminal_frame->pixels[0] = 0.123456789f;
  } else {
    const EnvConfig env = EnvConfig::for_task(TaskId::kPush);
    t.initial_state = sample_initial_state(env, rng);
    t.initial_state->squash = 0.1 * M_PI;
  }
  return t;
}

void expect_same_state(const EnvState& a, const EnvState& b) {
  EXPECT_EQ(a.scene.object_position, b.scene.object_position);
  EXPECT_EQ(a.scene.kind, b.scene.kind);
  EXPECT_EQ(a.scene.softness, b.scene.softness);
  EXPECT_EQ(a.scene.object_half_extent, b.scene.object_half_extent);
  EXPECT_EQ(a.scene.target.lo, b.scene.target.lo);
  EXPECT_EQ(a.scene.target.hi, b.scene.target.hi);
  EXPECT_EQ(a.scene.texture_seed, b.scene.texture_seed);
  EXPECT_EQ(a.gripper.to_array(), b.gripper.to_array());
  EXPECT_EQ(a.held, b.held);
  EXPECT_EQ(a.step_count, b.step_count);
  EXPECT_EQ(a.squash, b.squash);
}

void expect_same(const Trajectory& a, const Trajectory& b) {
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(a.provenance, b.provenance);
  EXPECT_EQ(a.task, b.task);
  EXPECT_EQ(a.source_id, b.source_id);
  EXPECT_EQ(a.pivot, b.pivot);
  EXPECT_EQ(a.deviation_direction, b.deviation_direction);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.steps[i].pose.to_array(), b.steps[i].pose.to_array());
    EXPECT_EQ(a.steps[i].action.to_array(), b.steps[i].action.to_array());
    EXPECT_EQ(a.steps[i].frame, b.steps[i].frame);
    EXPECT_EQ(a.steps[i].phase, b.steps[i].phase);
  }
  ASSERT_EQ(a.terminal_frame.has_value(), b.terminal_frame.has_value());
  if (a.terminal_frame) EXPECT_EQ(*a.terminal_frame, *b.terminal_frame);
  ASSERT_EQ(a.initial_state.has_value(), b.initial_state.has_value());
  if (a.initial_state) expect_same_state(*a.initial_state, *b.initial_state);
}

std::vector<Trajectory> mixed(Rng& rng) {
  return {make_trajectory(0, Provenance::kExpert, 6, rng),
          make_trajectory(7, Provenance::kPlay, 4, rng),
          make_trajectory(9, Provenance::kSynthesized, 3, rng)};
}

nlohmann::json read_manifest(const fs::path& dir) {
  return nlohmann::json::parse(read_text(dir / "manifest.json"));
}

void write_manifest(const fs::path& dir, const nlohmann::json& j) {
  write_text_atomic(dir / "manifest.json", j.dump(2));
}

TEST(Dataset, EmptyRoundTrip) {
  TempDir dir("empty");
  const DatasetManifest m = save_dataset({}, dir.path());
  EXPECT_EQ(m.expert_count + m.play_count + m.synthesized_count, 0u);
  DatasetManifest loaded;
  EXPECT_TRUE(load_dataset(dir.path(), &loaded).empty());
  EXPECT_EQ(loaded.version, kDatasetFormatVersion);
}

TEST(Dataset, MixedProvenanceRoundTrip) {
  Rng rng(1);
  const auto trajs = mixed(rng);
  TempDir dir("mixed");
  const DatasetManifest saved = save_dataset(trajs, dir.path(), 42, 0xfeedULL);
  EXPECT_EQ(saved.expert_count, 1u);
  EXPECT_EQ(saved.play_count, 1u);
  EXPECT_EQ(saved.synthesized_count, 1u);
  DatasetManifest m;
  const auto loaded = load_dataset(dir.path(), &m);
  ASSERT_EQ(loaded.size(), trajs.size());
  for (size_t i = 0; i < trajs.size(); ++i) expect_same(trajs[i], loaded[i]);
  EXPECT_EQ(m.seed, 42u);
  EXPECT_EQ(m.config_hash, 0xfeedULL);
  EXPECT_EQ(m.height, 8);
  EXPECT_EQ(m.width, 12);
}

TEST(Dataset, SavingTwiceIsByteIdentical) {
  Rng a(2), b(2);
  TempDir d1("bytes1"), d2("bytes2");
  save_dataset(mixed(a), d1.path());
  save_dataset(mixed(b), d2.path());
  EXPECT_EQ(read_text(d1.path() / "data.bin"), read_text(d2.path() / "data.bin"));
  EXPECT_EQ(read_text(d1.path() / "manifest.json"),
            read_text(d2.path() / "manifest.json"));
}

TEST(Dataset, OverlappingOffsetsAreRejected) {
  Rng rng(3);
  TempDir dir("overlap");
  save_dataset(mixed(rng), dir.path());
  auto j = read_manifest(dir.path());
  j["trajectories"][1]["offset"] = j["trajectories"][1]["offset"].get<std::uint64_t>() - 8;
  write_manifest(dir.path(), j);
  EXPECT_THROW(load_dataset(dir.path()), IntegrityError);
}

TEST(Dataset, TruncatedBlobIsRejected) {
  Rng rng(4);
  TempDir dir("trunc");
  save_dataset(mixed(rng), dir.path());
  const fs::path blob = dir.path() / "data.bin";
  fs::resize_file(blob, fs::file_size(blob) - 3);
  EXPECT_THROW(load_dataset(dir.path()), IntegrityError);
}

TEST(Dataset, VersionAndMissingInput) {
  Rng rng(5);
  TempDir dir("version");
  save_dataset(mixed(rng), dir.path());
  auto j = read_manifest(dir.path());
  j["format_version"] = kDatasetFormatVersion + 1;
  write_manifest(dir.path(), j);
  EXPECT_THROW(load_dataset(dir.path()), UnsupportedVersion);
  EXPECT_THROW(load_dataset(dir.path() / "nope"), MissingInput);
  write_text_atomic(dir.path() / "manifest.json", "{ not json");
  EXPECT_THROW(load_dataset(dir.path()), IntegrityError);
}

TEST(Dataset, CountMismatchIsRejected) {
  Rng rng(6);
  TempDir dir("counts");
  save_dataset(mixed(rng), dir.path());
  auto j = read_manifest(dir.path());
  j["counts"]["expert"] = 2;
  write_manifest(dir.path(), j);
  EXPECT_THROW(load_dataset(dir.path()), IntegrityError);
}

TEST(Dataset, MixedResolutionsAreRejected) {
  Rng rng(7);
  auto trajs = mixed(rng);
  trajs[1].steps[0].frame = Frame(4, 4, 1);
  TempDir dir("res");
  EXPECT_THROW(save_dataset(trajs, dir.path()), InvalidInput);
}

TEST(Checkpoint, PolicyRoundTrip) {
  PolicyNet net(16, 3, {7, 5}, Activation::kRelu);
  Rng rng(8);
  net.mlp().init(rng);
  round_to_float32(net.mlp().params());
  net.offset().setConstant(0.5f);
  net.scale().setConstant(0.25f);
  TempDir dir("policy");
  const fs::path p = dir.path() / "policy.bin";
  save_policy(net, p, 77);
  const PolicyNet back = load_policy(p, 77);
  EXPECT_EQ(back.obs_size(), 16);
  EXPECT_EQ(back.horizon(), 3);
  EXPECT_EQ(back.mlp().sizes(), net.mlp().sizes());
  EXPECT_EQ(back.mlp().activation(), Activation::kRelu);
  EXPECT_EQ(back.flat_params(), net.flat_params());
  EXPECT_NO_THROW(load_policy(p));
  EXPECT_THROW(load_policy(p, 78), IntegrityError);
  EXPECT_THROW(load_flow(p), IntegrityError);
  EXPECT_THROW(load_policy(dir.path() / "missing.bin"), MissingInput);
}

TEST(Checkpoint, FlowRoundTripAndCorruption) {
  FlowNet net(6, 2, {9}, Activation::kTanh);
  Rng rng(9);
  net.mlp().init(rng);
  round_to_float32(net.mlp().params());
  TempDir dir("flow");
  const fs::path p = dir.path() / "flow.bin";
  save_flow(net, p, 5);
  const FlowNet back = load_flow(p, 5);
  EXPECT_EQ(back.latent_dim(), 6);
  EXPECT_EQ(back.context_frames(), 2);
  EXPECT_EQ(back.mlp().params(), net.mlp().params());

  std::string bytes = read_text(p);
  {
    std::ofstream out(dir.path() / "short.bin", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 4);
  }
  EXPECT_THROW(load_flow(dir.path() / "short.bin"), IntegrityError);
  bytes[0] ^= 0x5a;
  {
    std::ofstream out(dir.path() / "magic.bin", std::ios::binary);
    out << bytes;
  }
  EXPECT_THROW(load_flow(dir.path() / "magic.bin"), IntegrityError);
  bytes[0] ^= 0x5a;
  bytes[8] = static_cast<char>(kCheckpointFormatVersion + 1);
  {
    std::ofstream out(dir.path() / "version.bin", std::ios::binary);
    out << bytes;
  }
  EXPECT_THROW(load_flow(dir.path() / "version.bin"), UnsupportedVersion);
}

TEST(TextFiles, AtomicWriteReplaces) {
  TempDir dir("text");
  const fs::path p = dir.path() / "a.txt";
  write_text_atomic(p, "first");
  write_text_atomic(p, "second");
  EXPECT_EQ(read_text(p), "second");
  EXPECT_THROW(read_text(dir.path() / "none.txt"), MissingInput);
}

}  // namespace
}  // namespace wmdagger
