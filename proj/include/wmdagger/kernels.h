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

#ifndef WMDAGGER_KERNELS_H_
#define WMDAGGER_KERNELS_H_

#include <cstdint>
#include <optional>
#include <span>

#include "wmdagger/geometry.h"

// Per-pixel kernels. Each kernel exists twice: `serial` is the reference
// implementation kept for tests, `omp` is the OpenMP data-parallel version
// used by the library. Both evaluate the same per-pixel function, so their
// outputs are bit-identical for any thread count.

namespace wmdagger {

struct RenderPrimitive {
  enum class Shape { kEllipsoid, kBox };
  Shape shape = Shape::kEllipsoid;
  Vec3 center = Vec3::Zero();
  Vec3 half_extent = Vec3::Constant(0.04);  // semi-axes for ellipsoids
  double albedo = 0.2;
};

// Flat description of what the camera can see.
struct RenderScene {
  double table_height = 0.0;
  double table_albedo = 0.55;
  double texture_contrast = 0.08;
  double texture_cell = 0.03;
  std::uint64_t texture_seed = 0;
  double background = 0.95;
  // Target footprint drawn on the table (xy rectangle).
  bool has_target = false;
  Eigen::Vector2d target_lo = Eigen::Vector2d::Zero();
  Eigen::Vector2d target_hi = Eigen::Vector2d::Zero();
  double target_albedo = 0.85;
  std::optional<RenderPrimitive> object;
  Vec3 light_dir = Vec3(0.3, -0.5, 1.0).normalized();
};

// Intensity seen along one ray.
double shade_ray(const RenderScene& scene, const Vec3& origin,
                 const Vec3& direction);

namespace kernels {
namespace serial {

void ray_grid(const CameraPose& pose, const CameraIntrinsics& k,
              RayGrid& out);
void dense_geo_condition(const CameraPose& pose_t, const CameraPose& pose_ti,
                         const CameraIntrinsics& k, double gripper,
                         DenseTensor& out);
void render(const RenderScene& scene, const CameraPose& pose,
            const CameraIntrinsics& k, std::span<float> out);

}  // namespace serial

namespace omp {

void ray_grid(const CameraPose& pose, const CameraIntrinsics& k,
              RayGrid& out);
void dense_geo_condition(const CameraPose& pose_t, const CameraPose& pose_ti,
                         const CameraIntrinsics& k, double gripper,
                         DenseTensor& out);
void render(const RenderScene& scene, const CameraPose& pose,
            const CameraIntrinsics& k, std::span<float> out);

}  // namespace omp
}  // namespace kernels
}  // namespace wmdagger

#endif  // WMDAGGER_KERNELS_H_
