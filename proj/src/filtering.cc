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

#include "wmdagger/filtering.h"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "json.hpp"

namespace wmdagger {

HandcraftedEmbedder::HandcraftedEmbedder(int height, int width, int dim)
    : height_(height), width_(width), dim_(dim) {
  if (height % 4 != 0 || width % 4 != 0 || height < 4 || width < 4) {
    throw InvalidInput("embedder resolution must be a positive multiple of 4");
  }
  if (dim < kFeatures) {
    throw InvalidInput("embedding dimension must be >= " + std::to_string(kFeatures));
  }
}

Eigen::VectorXd HandcraftedEmbedder::embed(const Frame& frame) const {
  if (frame.height != height_ || frame.width != width_ || frame.channels != 1) {
    throw InvalidInput("frame resolution does not match the embedder");
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(dim_);
  const int bh = height_ / 4, bw = width_ / 4;
  for (int by = 0; by < 4; ++by) {
    for (int bx = 0; bx < 4; ++bx) {
      double sum = 0.0, sq = 0.0;
      for (int y = by * bh; y < (by + 1) * bh; ++y) {
        for (int x = bx * bw; x < (bx + 1) * bw; ++x) {
          const double v = frame.at(y, x);
          sum += v;
          sq += v * v;
        }
      }
      const double n = static_cast<double>(bh) * bw;
      const double mean = sum / n;
      f[by * 4 + bx] = mean;
      f[48 + by * 4 + bx] = std::max(0.0, sq / n - mean * mean);
    }
  }

  const int ch = height_ / 2, cw = width_ / 2;
  for (int cy = 0; cy < 2; ++cy) {
    for (int cx = 0; cx < 2; ++cx) {
      double hist[8] = {0};
      double total = 0.0;
      for (int y = cy * ch; y < (cy + 1) * ch; ++y) {
        for (int x = cx * cw; x < (cx + 1) * cw; ++x) {
          const double gx = frame.at(y, std::min(x + 1, width_ - 1)) -
                            frame.at(y, std::max(x - 1, 0));
          const double gy = frame.at(std::min(y + 1, height_ - 1), x) -
                            frame.at(std::max(y - 1, 0), x);
          const double mag = std::hypot(gx, gy);
          if (mag == 0.0) continue;
          double angle = std::atan2(gy, gx);
          if (angle < 0.0) angle += 2.0 * M_PI;
          const int bin = std::min(7, static_cast<int>(angle / (2.0 * M_PI) * 8.0));
          hist[bin] += mag;
          total += mag;
        }
      }
      double* out = f.data() + 16 + (cy * 2 + cx) * 8;
      for (int b = 0; b < 8; ++b) out[b] = total > 0.0 ? hist[b] / total : 1.0 / 8.0;
    }
  }
  // Projection: block means become contrasts around the frame mean and each
  // feature group is scaled to unit length, so the large shared brightness
  // term cannot swamp the localized changes the filter must see.
  const double frame_mean = f.head(16).mean();
  f.head(16).array() -= frame_mean;
  for (auto [start, len] : {std::pair{0, 16}, std::pair{16, 32}, std::pair{48, 16}}) {
    const double norm = f.segment(start, len).norm();
    if (norm > 1e-12) f.segment(start, len) /= norm;
  }
  return f / f.norm();
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) throw InvalidInput("embedding dimensions differ");
  return std::clamp(a.dot(b), -1.0, 1.0);
}

std::string FilterReport::to_json() const {
  nlohmann::json j;
  j["scope"] = scope;
  j["threshold"] = threshold;
  j["scores"] = scores;
  j["retained_ids"] = retained_ids;
  j["discarded_ids"] = discarded_ids;
  j["retained"] = retained_ids.size();
  j["discarded"] = discarded_ids.size();
  return j.dump(2);
}

FilterResult filter_batch(std::span<const SynthesizedTrajectory> batch,
                          std::span<const Frame> anchors,
                          const Embedder& embedder, const std::string& scope) {
  if (batch.empty()) throw InvalidInput("filtering needs a nonempty batch");
  if (anchors.size() != batch.size()) {
    throw InvalidInput("filtering needs one anchor frame per trajectory");
  }
  const int n = static_cast<int>(batch.size());
  FilterResult result;
  FilterReport& report = result.report;
  report.scope = scope;
  report.scores.resize(n);
  // Scores are independent; the threshold waits for all of them.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    report.scores[i] = cosine_similarity(embedder.embed(batch[i].terminal_frame),
                                         embedder.embed(anchors[i]));
  }
  double sum = 0.0;
  for (double s : report.scores) sum += s;
  report.threshold = sum / n;
  if (n == 1) spdlog::warn("filtering a single trajectory; it is kept unconditionally");

  result.keep.resize(n);
  for (int i = 0; i < n; ++i) {
    const bool keep = report.scores[i] >= report.threshold - kFilterTieTolerance;
    result.keep[i] = keep;
    (keep ? report.retained_ids : report.discarded_ids).push_back(batch[i].id);
  }
  return result;
}

std::vector<Frame> anchor_frames(std::span<const SynthesizedTrajectory> batch,
                                 std::span<const Trajectory> demos) {
  std::unordered_map<std::int64_t, const Trajectory*> by_id;
  for (const Trajectory& t : demos) by_id[t.id] = &t;
  std::vector<Frame> out;
  out.reserve(batch.size());
  for (const SynthesizedTrajectory& s : batch) {
    const auto it = by_id.find(s.source_id);
    if (it == by_id.end()) {
      throw InvalidInput("no demonstration with id " + std::to_string(s.source_id));
    }
    if (s.pivot < 0 || s.pivot >= static_cast<int>(it->second->size())) {
      throw InvalidInput("pivot outside its source demonstration");
    }
    out.push_back(it->second->steps[s.pivot].frame);
  }
  return out;
}

}  // namespace wmdagger
