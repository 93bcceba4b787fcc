#pragma once

// Agent poses, rigid transforms and the neighbor-to-ego transform operator.
//
// Rotation convention: intrinsic yaw-pitch-roll, R = Rz(yaw) * Ry(pitch) * Rx(roll).
// A pose maps points from the agent's local frame into the world frame.

#include "coplot/common.hpp"

#include <vector>

namespace coplot {

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  bool is_finite() const;
  Pose normalized() const;
  Eigen::Matrix4d to_matrix() const;
  static Pose from_matrix(const Eigen::Matrix4d& m);
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_pose(const Pose& pose);

  RigidTransform inverse() const;
  /// (this * other)(p) == this(other(p))
  RigidTransform operator*(const RigidTransform& other) const;
  Vec3 operator()(const Vec3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d to_matrix() const;

  /// Orthonormal with unit determinant, both within tol.
  bool is_valid(double tol = 1e-10) const;
};

struct NoiseSpec {
  double pos_std = 0.0;
  double rot_std = 0.0;
  std::uint64_t seed = 0;
  /// Planar mode perturbs x, y and yaw only; full mode perturbs all six DoF.
  bool full_6dof = false;
};

/// Transform taking points in the neighbor frame into the ego frame.
RigidTransform relative_transform(const Pose& ego, const Pose& neighbor);

std::vector<Vec3> apply_transform(std::span<const Vec3> points, const RigidTransform& t);

/// Deterministic for a fixed (seed, stream). Distinct agents use distinct streams.
Pose perturb_pose(const Pose& pose, const NoiseSpec& noise, std::uint64_t stream = 0);

}  // namespace coplot
