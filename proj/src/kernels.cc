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

#include "wmdagger/kernels.h"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wmdagger {
namespace {

constexpr double kNoHit = std::numeric_limits<double>::infinity();

inline Vec3 ray_at(const CameraPose& pose, const CameraIntrinsics& k, int u,
                   int v) {
  const Vec3 cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  const Vec3 world = pose.rotation * cam;
  return world / world.norm();
}

inline void geo_pixel(const CameraPose& pose_t, const CameraPose& pose_ti,
                      const CameraIntrinsics& k, int u, int v,
                      const Vec3& delta_o, double gripper, double* out) {
  const Vec3 shift = ray_at(pose_ti, k, u, v) - ray_at(pose_t, k, u, v);
  const double n = shift.norm();
  const Vec3 dir = n < kZeroMotionEps ? Vec3::Zero() : Vec3(shift / n);
  out[0] = delta_o.x();
  out[1] = delta_o.y();
  out[2] = delta_o.z();
  out[3] = dir.x();
  out[4] = dir.y();
  out[5] = dir.z();
  out[6] = gripper;
}

// Cheap integer hash -> [0, 1).
inline double cell_noise(long long ix, long long iy, std::uint64_t seed) {
  std::uint64_t h = seed ^ 0x2545f4914f6cdd1dULL;
  h ^= static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL;
  h = (h ^ (h >> 29)) * 0xbf58476d1ce4e5b9ULL;
  h ^= static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL;
  h = (h ^ (h >> 32)) * 0x94d049bb133111ebULL;
  h ^= h >> 29;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Returns hit distance, writes outward unit normal.
double intersect_ellipsoid(const RenderPrimitive& p, const Vec3& o,
                           const Vec3& d, Vec3& normal) {
  const Vec3 inv = p.half_extent.cwiseInverse();
  const Vec3 os = (o - p.center).cwiseProduct(inv);
  const Vec3 ds = d.cwiseProduct(inv);
  const double a = ds.squaredNorm();
  const double b = os.dot(ds);
  const double c = os.squaredNorm() - 1.0;
  const double disc = b * b - a * c;
  if (disc < 0.0) return kNoHit;
  const double sq = std::sqrt(disc);
  double t = (-b - sq) / a;
  if (t <= 1e-9) t = (-b + sq) / a;
  if (t <= 1e-9) return kNoHit;
  const Vec3 hit = o + t * d;
  normal = (hit - p.center).cwiseProduct(inv).cwiseProduct(inv).normalized();
  return t;
}

double intersect_box(const RenderPrimitive& p, const Vec3& o, const Vec3& d,
                     Vec3& normal) {
  double t_near = -kNoHit;
  double t_far = kNoHit;
  int axis = -1;
  double sign = 1.0;
  for (int i = 0; i < 3; ++i) {
    const double lo = p.center[i] - p.half_extent[i];
    const double hi = p.center[i] + p.half_extent[i];
    if (std::abs(d[i]) < 1e-15) {
      if (o[i] < lo || o[i] > hi) return kNoHit;
      continue;
    }
    double t0 = (lo - o[i]) / d[i];
    double t1 = (hi - o[i]) / d[i];
    double s = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      s = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      axis = i;
      sign = s;
    }
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return kNoHit;
  }
  if (axis < 0 || t_near <= 1e-9) return kNoHit;
  normal = Vec3::Zero();
  normal[axis] = sign;
  return t_near;
}

inline void render_pixel(const RenderScene& scene, const CameraPose& pose,
                         const CameraIntrinsics& k, int u, int v,
                         float* out) {
  const double value = shade_ray(scene, pose.origin, ray_at(pose, k, u, v));
  *out = static_cast<float>(std::clamp(value, 0.0, 1.0));
}

}  // namespace

double shade_ray(const RenderScene& scene, const Vec3& o, const Vec3& d) {
  double best = kNoHit;
  double value = scene.background;

  if (d.z() < 0.0) {
    const double t = (scene.table_height - o.z()) / d.z();
    if (t > 0.0) {
      best = t;
      const Vec3 hit = o + t * d;
      const bool in_target = scene.has_target &&
                             hit.x() >= scene.target_lo.x() &&
                             hit.x() <= scene.target_hi.x() &&
                             hit.y() >= scene.target_lo.y() &&
                             hit.y() <= scene.target_hi.y();
      const double base = in_target ? scene.target_albedo : scene.table_albedo;
      const double noise = cell_noise(
          static_cast<long long>(std::floor(hit.x() / scene.texture_cell)),
          static_cast<long long>(std::floor(hit.y() / scene.texture_cell)),
          scene.texture_seed);
      value = base + scene.texture_contrast * (noise - 0.5);
    }
  }

  if (scene.object) {
    Vec3 normal;
    const double t =
        scene.object->shape == RenderPrimitive::Shape::kEllipsoid
            ? intersect_ellipsoid(*scene.object, o, d, normal)
            : intersect_box(*scene.object, o, d, normal);
    if (t < best) {
      best = t;
      const double lambert = std::max(0.0, normal.dot(scene.light_dir));
      value = scene.object->albedo * (0.35 + 0.65 * lambert);
    }
  }
  return value;
}

namespace kernels {
namespace serial {

void ray_grid(const CameraPose& pose, const CameraIntrinsics& k,
              RayGrid& out) {
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 d = ray_at(pose, k, u, v);
      out.at(v, u, 0) = d.x();
      out.at(v, u, 1) = d.y();
      out.at(v, u, 2) = d.z();
    }
  }
}

void dense_geo_condition(const CameraPose& pose_t, const CameraPose& pose_ti,
                         const CameraIntrinsics& k, double gripper,
                         DenseTensor& out) {
  const Vec3 delta_o = pose_ti.origin - pose_t.origin;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      geo_pixel(pose_t, pose_ti, k, u, v, delta_o, gripper,
                &out.data[out.index(v, u, 0)]);
    }
  }
}

void render(const RenderScene& scene, const CameraPose& pose,
            const CameraIntrinsics& k, std::span<float> out) {
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      render_pixel(scene, pose, k, u, v, &out[static_cast<size_t>(v) * k.width + u]);
    }
  }
}

}  // namespace serial

namespace omp {

void ray_grid(const CameraPose& pose, const CameraIntrinsics& k,
              RayGrid& out) {
#pragma omp parallel for schedule(static)
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 d = ray_at(pose, k, u, v);
      out.at(v, u, 0) = d.x();
      out.at(v, u, 1) = d.y();
      out.at(v, u, 2) = d.z();
    }
  }
}

void dense_geo_condition(const CameraPose& pose_t, const CameraPose& pose_ti,
                         const CameraIntrinsics& k, double gripper,
                         DenseTensor& out) {
  const Vec3 delta_o = pose_ti.origin - pose_t.origin;
#pragma omp parallel for schedule(static)
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      geo_pixel(pose_t, pose_ti, k, u, v, delta_o, gripper,
                &out.data[out.index(v, u, 0)]);
    }
  }
}

void render(const RenderScene& scene, const CameraPose& pose,
            const CameraIntrinsics& k, std::span<float> out) {
#pragma omp parallel for schedule(static)
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      render_pixel(scene, pose, k, u, v, &out[static_cast<size_t>(v) * k.width + u]);
    }
  }
}

}  // namespace omp
}  // namespace kernels
}  // namespace wmdagger
