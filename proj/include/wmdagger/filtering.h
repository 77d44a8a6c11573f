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

#ifndef WMDAGGER_FILTERING_H_
#define WMDAGGER_FILTERING_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wmdagger/envsim.h"
#include "wmdagger/synthesis.h"

// Consistency filtering: compare each synthesized terminal frame with the
// real frame at the anchor pose and drop the trajectories that score below
// the batch mean.

namespace wmdagger {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dim() const = 0;
  // Unit-norm feature vector. Throws InvalidInput on a resolution mismatch.
  virtual Eigen::VectorXd embed(const Frame& frame) const = 0;
};

// 4x4 block means, 8-bin gradient-orientation histograms on a 2x2 grid and
// 4x4 block variances, zero-padded to `dim` and L2-normalized. A cell with no
// gradient spreads its histogram evenly over the bins.
class HandcraftedEmbedder : public Embedder {
 public:
  static constexpr int kFeatures = 16 + 32 + 16;

  HandcraftedEmbedder(int height = 64, int width = 64, int dim = 128);
  int dim() const override { return dim_; }
  Eigen::VectorXd embed(const Frame& frame) const override;

 private:
  int height_, width_, dim_;
};

// Dot product of two unit vectors, clamped to [-1, 1].
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Scores within this distance of the batch mean count as ties and are kept,
// so a batch of numerically equal scores is retained whole.
inline constexpr double kFilterTieTolerance = 1e-9;

struct FilterReport {
  std::vector<double> scores;
  double threshold = 0.0;
  std::vector<std::int64_t> retained_ids;
  std::vector<std::int64_t> discarded_ids;
  std::string scope;

  std::string to_json() const;
};

struct FilterResult {
  FilterReport report;
  std::vector<bool> keep;  // parallel to the input batch
};

// anchors[i] is the real frame at batch[i]'s pivot.
FilterResult filter_batch(std::span<const SynthesizedTrajectory> batch,
                          std::span<const Frame> anchors,
                          const Embedder& embedder,
                          const std::string& scope = "");

// Looks up the expert frame at each trajectory's pivot by source id.
std::vector<Frame> anchor_frames(std::span<const SynthesizedTrajectory> batch,
                                 std::span<const Trajectory> demos);

}  // namespace wmdagger

#endif  // WMDAGGER_FILTERING_H_
