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

#include <cmath>

#include <gtest/gtest.h>

#include "test_util.h"
#include "wmdagger/common.h"
#include "wmdagger/geometry.h"
#include "wmdagger/kernels.h"

namespace wmdagger {
namespace {

using testing::random_intrinsics;
using testing::random_pose;
using testing::random_quaternion;
using testing::random_vec;

// Hamilton product rotation q v q*, independent of Eigen's matrix conversion.
Vec3 rotate_by_quaternion(const Quat& q, const Vec3& v) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  // t = q * (0, v)
  const double tw = -x * v.x() - y * v.y() - z * v.z();
  const double tx = w * v.x() + y * v.z() - z * v.y();
  const double ty = w * v.y() + z * v.x() - x * v.z();
  const double tz = w * v.z() + x * v.y() - y * v.x();
  // t * conj(q)
  return {-tw * x + tx * w - ty * z + tz * y,
          -tw * y + ty * w - tz * x + tx * z,
          -tw * z + tz * w - tx * y + ty * x};
}

Vec3 oracle_ray(const CameraPose& pose, const CameraIntrinsics& k, int u, int v) {
  const Vec3 cam = k.matrix().inverse() * Vec3(u, v, 1.0);
  const Vec3 world = pose.rotation * cam;
  return world / world.norm();
}

TEST(Action, MakeCanonicalizesSign) {
  const Action a = Action::make(Vec3::Zero(), Quat(-1.0, 0.0, 0.0, 0.0), 0.5);
  EXPECT_EQ(a.orientation.w(), 1.0);
  const Action b = Action::make(Vec3::Zero(), Quat(-2.0, 0.0, 0.0, 2.0), 0.5);
  EXPECT_GE(b.orientation.w(), 0.0);
  EXPECT_NEAR(b.orientation.norm(), 1.0, 1e-12);
}

TEST(Action, ValidationRejectsBadValues) {
  Action a;
  a.orientation = Quat(1.0, 0.1, 0.0, 0.0);
  EXPECT_THROW(validate(a), InvalidInput);
  a.orientation = Quat::Identity();
  a.gripper = 1.5;
  EXPECT_THROW(validate(a), InvalidInput);
  a.gripper = 0.5;
  a.translation.x() = std::nan("");
  EXPECT_THROW(validate(a), InvalidInput);
}

TEST(Action, ArrayRoundTrip) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Action a = Action::make(random_vec(rng), random_quaternion(rng), 0.25);
    const auto arr = a.to_array();
    EXPECT_EQ(Action::from_array(arr), a);
  }
}

TEST(PoseFromAction, IdentityCase) {
  const CameraPose p = pose_from_action(Action{}, HandEyeCalib{});
  EXPECT_EQ(p.rotation, Mat3::Identity());
  EXPECT_EQ(p.origin, Vec3::Zero());
}

TEST(PoseFromAction, PureTranslation) {
  Action a;
  a.translation = Vec3(1, 2, 3);
  EXPECT_EQ(pose_from_action(a, HandEyeCalib{}).origin, Vec3(1, 2, 3));
}

TEST(PoseFromAction, QuarterTurnAboutZ) {
  const double h = std::sqrt(0.5);
  Action a = Action::make(Vec3(0.3, -0.2, 0.7), Quat(h, 0.0, 0.0, h), 1.0);
  HandEyeCalib calib;
  calib.translation = Vec3(0.1, 0.0, 0.0);
  const CameraPose p = pose_from_action(a, calib);
  EXPECT_NEAR((p.origin - (Vec3(0.0, 0.1, 0.0) + a.translation)).norm(), 0.0, 1e-15);
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((p.rotation - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(PoseFromAction, MatchesQuaternionOracle) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Action a = Action::make(random_vec(rng), random_quaternion(rng), 1.0);
    HandEyeCalib calib;
    calib.rotation = random_quaternion(rng).toRotationMatrix();
    calib.translation = random_vec(rng, 0.2);
    const CameraPose p = pose_from_action(a, calib);
    const Vec3 o = rotate_by_quaternion(a.orientation, calib.translation) + a.translation;
    EXPECT_LT((p.origin - o).norm(), 1e-12);
    for (int c = 0; c < 3; ++c) {
      const Vec3 col = rotate_by_quaternion(a.orientation, calib.rotation.col(c));
      EXPECT_LT((p.rotation.col(c) - col).norm(), 1e-12);
    }
    EXPECT_TRUE(is_rotation(p.rotation));
  }
}

TEST(PoseFromAction, IdentityCalibrationRoundTrip) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const Action a = Action::make(random_vec(rng), random_quaternion(rng), 0.0);
    const CameraPose p = pose_from_action(a, HandEyeCalib{});
    EXPECT_EQ(p.origin, a.translation);
    EXPECT_LT((p.rotation - a.orientation.toRotationMatrix()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(PoseFromAction, RejectsNonUnitQuaternion) {
  Action a;
  a.orientation = Quat(2.0, 0.0, 0.0, 0.0);
  EXPECT_THROW(pose_from_action(a, HandEyeCalib{}), InvalidInput);
}

TEST(Quaternion, RandomUnitQuaternionsGiveRotations) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_TRUE(is_rotation(random_quaternion(rng).toRotationMatrix(), 1e-9));
  }
  EXPECT_THROW(canonical_quaternion(Quat(0, 0, 0, 0)), InvalidInput);
}

TEST(PixelRay, PrincipalAxis) {
  CameraIntrinsics k{1.0, 1.0, 0.0, 0.0, 2, 2};
  EXPECT_EQ(pixel_ray_direction(CameraPose{}, k, 0, 0), Vec3(0, 0, 1));
}

TEST(PixelRay, HandEvaluatedOffAxis) {
  CameraIntrinsics k{1.0, 1.0, 0.0, 0.0, 2, 2};
  const Vec3 d = pixel_ray_direction(CameraPose{}, k, 1, 0);
  EXPECT_LT((d - Vec3(1, 0, 1) / std::sqrt(2.0)).norm(), 1e-15);
}

TEST(PixelRay, RotatedPrincipalAxis) {
  CameraIntrinsics k{1.0, 1.0, 0.0, 0.0, 2, 2};
  CameraPose pose;
  pose.rotation = Eigen::AngleAxisd(M_PI / 2, Vec3::UnitY()).toRotationMatrix();
  const Vec3 d = pixel_ray_direction(pose, k, 0, 0);
  EXPECT_LT((d - Vec3(1, 0, 0)).norm(), 1e-15);
}

TEST(PixelRay, RejectsBadInputs) {
  CameraIntrinsics k{0.0, 1.0, 0.0, 0.0, 2, 2};
  EXPECT_THROW(pixel_ray_direction(CameraPose{}, k, 0, 0), InvalidInput);
  k.fx = 1.0;
  EXPECT_THROW(pixel_ray_direction(CameraPose{}, k, 2, 0), InvalidInput);
  EXPECT_THROW(pixel_ray_direction(CameraPose{}, k, 0, -1), InvalidInput);
}

TEST(RayGrid, TwoByTwoMatchesPerPixelCalls) {
  CameraIntrinsics k{2.0, 2.0, 1.0, 1.0, 2, 2};
  const RayGrid g = ray_grid(CameraPose{}, k);
  for (int v = 0; v < 2; ++v) {
    for (int u = 0; u < 2; ++u) {
      EXPECT_EQ(g.vec3(v, u), pixel_ray_direction(CameraPose{}, k, u, v));
    }
  }
}

TEST(RayGrid, SinglePixelAtPrincipalPoint) {
  CameraIntrinsics k{5.0, 5.0, 0.0, 0.0, 1, 1};
  const RayGrid g = ray_grid(CameraPose{}, k);
  EXPECT_EQ(g.vec3(0, 0), Vec3(0, 0, 1));
}

TEST(RayGrid, BitExactAgainstPerPixelOverRandomPoses) {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const CameraPose pose = random_pose(rng);
    const CameraIntrinsics k = random_intrinsics(rng, 8);
    const RayGrid g = ray_grid(pose, k);
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        const Vec3 d = g.vec3(v, u);
        ASSERT_EQ(d, pixel_ray_direction(pose, k, u, v));
        ASSERT_LT((d - oracle_ray(pose, k, u, v)).norm(), 1e-9);
        ASSERT_NEAR(d.norm(), 1.0, 1e-12);
      }
    }
  }
}

TEST(RayGrid, SerialAndParallelAgree) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const CameraPose pose = random_pose(rng);
    CameraIntrinsics k = random_intrinsics(rng, 48);
    RayGrid a(k.height, k.width, 3), b(k.height, k.width, 3);
    kernels::serial::ray_grid(pose, k, a);
    kernels::omp::ray_grid(pose, k, b);
    EXPECT_EQ(a.data, b.data);
  }
}

TEST(DenseGeo, IdentityMotionIsZero) {
  Rng rng(31);
  const CameraPose pose = random_pose(rng);
  CameraIntrinsics k{4.0, 4.0, 2.0, 2.0, 5, 4};
  const DenseGeoCondition c = dense_geo_condition(pose, pose, k, 0.3);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      for (int ch = 0; ch < 6; ++ch) EXPECT_EQ(c.data.at(v, u, ch), 0.0);
      EXPECT_EQ(c.data.at(v, u, 6), 0.3);
    }
  }
}

TEST(DenseGeo, PureTranslation) {
  Rng rng(32);
  CameraPose a = random_pose(rng);
  CameraPose b = a;
  b.origin += Vec3(0.0, 0.0, 0.5);
  CameraIntrinsics k{4.0, 4.0, 2.0, 2.0, 6, 6};
  const DenseGeoCondition c = dense_geo_condition(a, b, k, 1.0);
  const Vec3 expected = b.origin - a.origin;
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      EXPECT_EQ(c.data.vec3(v, u, 0), expected);
      EXPECT_EQ(c.data.vec3(v, u, 3), Vec3::Zero());
    }
  }
}

TEST(DenseGeo, TenDegreeRotationGivesUnitShifts) {
  CameraPose a;
  CameraPose b;
  b.rotation = Eigen::AngleAxisd(10.0 * M_PI / 180.0, Vec3::UnitX()).toRotationMatrix();
  CameraIntrinsics k{8.0, 8.0, 4.0, 4.0, 8, 8};
  const DenseGeoCondition c = dense_geo_condition(a, b, k, 0.0);
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      EXPECT_EQ(c.data.vec3(v, u, 0), Vec3::Zero());
      const Vec3 shift = oracle_ray(b, k, u, v) - oracle_ray(a, k, u, v);
      EXPECT_LT((c.data.vec3(v, u, 3) - shift / shift.norm()).norm(), 1e-9);
      EXPECT_NEAR(c.data.vec3(v, u, 3).norm(), 1.0, 1e-7);
    }
  }
}

TEST(DenseGeo, InvariantsOverRandomPairs) {
  Rng rng(33);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const CameraPose a = random_pose(rng);
    const CameraPose b = trial % 3 == 0 ? a : random_pose(rng);
    const CameraIntrinsics k = random_intrinsics(rng, 8);
    const double g = unit(rng);
    const DenseGeoCondition c = dense_geo_condition(a, b, k, g);
    const Vec3 d_o = c.data.vec3(0, 0, 0);
    for (int v = 0; v < k.height; ++v) {
      for (int u = 0; u < k.width; ++u) {
        EXPECT_EQ(c.data.vec3(v, u, 0), d_o);
        EXPECT_EQ(c.data.at(v, u, 6), g);
        const double n = c.data.vec3(v, u, 3).norm();
        EXPECT_TRUE(std::abs(n) < 1e-7 || std::abs(n - 1.0) < 1e-7) << n;
      }
    }
  }
}

TEST(DenseGeo, SerialAndParallelAgree) {
  Rng rng(34);
  for (int trial = 0; trial < 10; ++trial) {
    const CameraPose a = random_pose(rng), b = random_pose(rng);
    CameraIntrinsics k = random_intrinsics(rng, 40);
    DenseTensor s(k.height, k.width, 7), p(k.height, k.width, 7);
    kernels::serial::dense_geo_condition(a, b, k, 0.5, s);
    kernels::omp::dense_geo_condition(a, b, k, 0.5, p);
    EXPECT_EQ(s.data, p.data);
  }
}

TEST(DenseGeo, RejectsBadGripper) {
  CameraIntrinsics k{1, 1, 0, 0, 1, 1};
  EXPECT_THROW(dense_geo_condition(CameraPose{}, CameraPose{}, k, 1.5), InvalidInput);
}

TEST(Project, InvertsPixelRay) {
  Rng rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    const CameraPose pose = random_pose(rng);
    CameraIntrinsics k{30.0, 25.0, 16.0, 12.0, 32, 24};
    const int u = trial % 32, v = trial % 24;
    const Vec3 p = pose.origin + 1.7 * pixel_ray_direction(pose, k, u, v);
    const Eigen::Vector2d px = project(pose, k, p);
    EXPECT_NEAR(px.x(), u, 1e-9);
    EXPECT_NEAR(px.y(), v, 1e-9);
  }
}

}  // namespace
}  // namespace wmdagger
