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

#ifndef WMDAGGER_STORAGE_H_
#define WMDAGGER_STORAGE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wmdagger/envsim.h"
#include "wmdagger/policy.h"
#include "wmdagger/worldmodel.h"

// Datasets are a directory holding manifest.json and data.bin. See
// docs/dataset_format.md for the byte layout.

namespace wmdagger {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

struct TrajectoryIndexEntry {
  std::int64_t id = 0;
  Provenance provenance = Provenance::kExpert;
  TaskId task = TaskId::kPush;
  std::uint64_t offset = 0;  // bytes into data.bin
  std::uint64_t length = 0;  // bytes
  std::uint64_t steps = 0;
  std::int64_t source_id = -1;
  int pivot = -1;
  Vec3 deviation_direction = Vec3::Zero();
  bool has_terminal_frame = false;
  std::optional<EnvState> initial_state;
};

struct DatasetManifest {
  int version = kDatasetFormatVersion;
  TaskId task = TaskId::kPush;
  int height = 0;
  int width = 0;
  int channels = 1;
  std::uint64_t expert_count = 0;
  std::uint64_t play_count = 0;
  std::uint64_t synthesized_count = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<TrajectoryIndexEntry> index;
};

// Writes `dir`/manifest.json and `dir`/data.bin (the directory is created).
// All trajectories must share one frame resolution.
DatasetManifest save_dataset(const std::vector<Trajectory>& trajectories,
                             const std::filesystem::path& dir,
                             std::uint64_t seed = 0,
                             std::uint64_t config_hash = 0);

// Throws MissingInput, UnsupportedVersion or IntegrityError.
std::vector<Trajectory> load_dataset(const std::filesystem::path& dir,
                                     DatasetManifest* manifest = nullptr);
DatasetManifest load_manifest(const std::filesystem::path& dir);

// Checkpoints: magic, version, type tag, config hash, shape block, float32
// parameters. Loading with a nonzero `expected_hash` rejects a mismatch.
enum class CheckpointType : std::uint32_t { kPolicy = 1, kFlow = 2 };

void save_policy(const PolicyNet& net, const std::filesystem::path& path,
                 std::uint64_t config_hash = 0);
PolicyNet load_policy(const std::filesystem::path& path,
                      std::uint64_t expected_hash = 0);
void save_flow(const FlowNet& net, const std::filesystem::path& path,
               std::uint64_t config_hash = 0);
FlowNet load_flow(const std::filesystem::path& path,
                  std::uint64_t expected_hash = 0);

// Writes `text` to `path` through a temporary file and a rename.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace wmdagger

#endif  // WMDAGGER_STORAGE_H_
