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

#include "wmdagger/geometry.h"

#include <cmath>
#include <string>

#include "wmdagger/common.h"
#include "wmdagger/kernels.h"

namespace wmdagger {

Quat canonical_quaternion(const Quat& q) {
  const double n = q.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) {
    throw InvalidInput("quaternion has zero or non-finite norm");
  }
  Quat out(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
  if (out.w() < 0.0) out.coeffs() = -out.coeffs();
  return out;
}

Action Action::make(const Vec3& translation, const Quat& orientation,
                    double gripper) {
  Action a;
  a.translation = translation;
  a.orientation = canonical_quaternion(orientation);
  a.gripper = gripper;
  validate(a);
  return a;
}

std::array<double, Action::kDim> Action::to_array() const {
  return {translation.x(),   translation.y(),   translation.z(),
          orientation.w(),   orientation.x(),   orientation.y(),
          orientation.z(),   gripper};
}

Action Action::from_array(std::span<const double> v) {
  if (v.size() != kDim) throw InvalidInput("action needs 8 values");
  Action a;
  a.translation = Vec3(v[0], v[1], v[2]);
  a.orientation = Quat(v[3], v[4], v[5], v[6]);
  a.gripper = v[7];
  return a;
}

void validate(const Action& a) {
  if (!a.translation.allFinite()) {
    throw InvalidInput("action translation is not finite");
  }
  if (std::abs(a.orientation.norm() - 1.0) > kUnitTolerance) {
    throw InvalidInput("action quaternion is not unit norm");
  }
  if (!(a.gripper >= 0.0 && a.gripper <= 1.0)) {
    throw InvalidInput("gripper scalar outside [0, 1]");
  }
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

void validate(const CameraIntrinsics& k) {
  if (!(k.fx > 0.0) || !(k.fy > 0.0)) {
    throw InvalidInput("intrinsics: focal lengths must be positive");
  }
  if (k.width <= 0 || k.height <= 0) {
    throw InvalidInput("intrinsics: image size must be positive");
  }
  if (!(k.cx >= 0.0 && k.cx < k.width && k.cy >= 0.0 && k.cy < k.height)) {
    throw InvalidInput("intrinsics: principal point outside the image");
  }
}

bool is_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

void validate(const HandEyeCalib& calib) {
  if (!is_rotation(calib.rotation)) {
    throw InvalidInput("hand-eye rotation is not a proper rotation");
  }
  if (!calib.translation.allFinite()) {
    throw InvalidInput("hand-eye translation is not finite");
  }
}

void validate(const CameraPose& pose) {
  if (!is_rotation(pose.rotation)) {
    throw InvalidInput("camera rotation is not a proper rotation");
  }
}

CameraPose pose_from_action(const Action& a, const HandEyeCalib& calib) {
  validate(a);
  const Mat3 r_grip = a.orientation.toRotationMatrix();
  CameraPose pose;
  pose.rotation = r_grip * calib.rotation;
  pose.origin = r_grip * calib.translation + a.translation;
  return pose;
}

Vec3 pixel_ray_direction(const CameraPose& pose, const CameraIntrinsics& k,
                         int u, int v) {
  validate(k);
  if (u < 0 || u >= k.width || v < 0 || v >= k.height) {
    throw InvalidInput("pixel index outside the image");
  }
  const Vec3 cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  const Vec3 world = pose.rotation * cam;
  return world / world.norm();
}

RayGrid ray_grid(const CameraPose& pose, const CameraIntrinsics& k) {
  validate(k);
  RayGrid grid(k.height, k.width, 3);
  kernels::omp::ray_grid(pose, k, grid);
  return grid;
}

DenseGeoCondition dense_geo_condition(const CameraPose& pose_t,
                                      const CameraPose& pose_ti,
                                      const CameraIntrinsics& k,
                                      double gripper) {
  validate(k);
  if (!(gripper >= 0.0 && gripper <= 1.0)) {
    throw InvalidInput("gripper scalar outside [0, 1]");
  }
  DenseGeoCondition cond;
  cond.data = DenseTensor(k.height, k.width, DenseGeoCondition::kChannels);
  kernels::omp::dense_geo_condition(pose_t, pose_ti, k, gripper, cond.data);
  return cond;
}

Eigen::Vector2d project(const CameraPose& pose, const CameraIntrinsics& k,
                        const Vec3& world_point) {
  const Vec3 cam = pose.rotation.transpose() * (world_point - pose.origin);
  if (!(cam.z() > 0.0)) throw InvalidInput("point behind the camera");
  return {k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy};
}

}  // namespace wmdagger
