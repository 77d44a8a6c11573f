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

#ifndef WMDAGGER_GEOMETRY_H_
#define WMDAGGER_GEOMETRY_H_

#include <array>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

// Camera and rigid-motion math for action-to-image conditioning.
//
// Conventions (used by every module):
//   * quaternions are Hamilton, stored (w, x, y, z), unit norm, w >= 0;
//   * the camera looks down +z of its own frame, image u grows to the right
//     and v grows downward;
//   * CameraPose::rotation maps camera-frame vectors into the world frame.

namespace wmdagger {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kUnitTolerance = 1e-9;
// Below this norm the per-pixel direction shift is treated as "no shift".
inline constexpr double kZeroMotionEps = 1e-9;

// Normalizes `q` and flips it into the w >= 0 hemisphere.
// Throws InvalidInput when q is (numerically) zero.
Quat canonical_quaternion(const Quat& q);

// 8-dim control vector: translation (3), orientation (4), gripper (1).
// Also used as an absolute gripper pose.
struct Action {
  static constexpr int kDim = 8;

  Vec3 translation = Vec3::Zero();
  Quat orientation = Quat::Identity();
  double gripper = 1.0;

  // Builds a validated action; the quaternion is canonicalized.
  static Action make(const Vec3& translation, const Quat& orientation,
                     double gripper);

  // Layout: tx ty tz qw qx qy qz g.
  std::array<double, kDim> to_array() const;
  static Action from_array(std::span<const double> values);

  friend bool operator==(const Action& a, const Action& b) {
    return a.to_array() == b.to_array();
  }
};

// Throws InvalidInput if the quaternion is not unit within kUnitTolerance or
// the gripper scalar leaves [0, 1].
void validate(const Action& a);

struct CameraIntrinsics {
  double fx = 32.0;
  double fy = 32.0;
  double cx = 32.0;
  double cy = 32.0;
  int width = 64;
  int height = 64;

  Mat3 matrix() const;
};
void validate(const CameraIntrinsics& k);

// Fixed gripper -> camera transform.
struct HandEyeCalib {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};
void validate(const HandEyeCalib& calib);

struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 origin = Vec3::Zero();
};
void validate(const CameraPose& pose);

// True when R^T R = I and det R = +1, both within `tol`.
bool is_rotation(const Mat3& r, double tol = kUnitTolerance);

// Row-major H x W x C tensor of doubles.
struct DenseTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  DenseTensor() = default;
  DenseTensor(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, 0.0) {}

  size_t index(int v, int u, int c) const {
    return (static_cast<size_t>(v) * width + u) * channels + c;
  }
  double& at(int v, int u, int c) { return data[index(v, u, c)]; }
  double at(int v, int u, int c) const { return data[index(v, u, c)]; }
  Vec3 vec3(int v, int u, int c0 = 0) const {
    return {at(v, u, c0), at(v, u, c0 + 1), at(v, u, c0 + 2)};
  }
};

using RayGrid = DenseTensor;  // H x W x 3 unit directions

// H x W x 7: [origin displacement (3), direction shift (3), gripper (1)].
struct DenseGeoCondition {
  static constexpr int kChannels = 7;
  DenseTensor data;
};

CameraPose pose_from_action(const Action& a, const HandEyeCalib& calib);

Vec3 pixel_ray_direction(const CameraPose& pose, const CameraIntrinsics& k,
                         int u, int v);

RayGrid ray_grid(const CameraPose& pose, const CameraIntrinsics& k);

DenseGeoCondition dense_geo_condition(const CameraPose& pose_t,
                                      const CameraPose& pose_ti,
                                      const CameraIntrinsics& k,
                                      double gripper);

// Camera-frame point projected to pixel coordinates (u, v). Requires z > 0.
Eigen::Vector2d project(const CameraPose& pose, const CameraIntrinsics& k,
                        const Vec3& world_point);

}  // namespace wmdagger

#endif  // WMDAGGER_GEOMETRY_H_
