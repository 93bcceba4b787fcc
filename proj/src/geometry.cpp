#include "coplot/geometry.hpp"

#include <cmath>
#include <numbers>

namespace coplot {

double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, two_pi);
  if (r <= -std::numbers::pi) r += two_pi;
  if (r > std::numbers::pi) r -= two_pi;
  return r;
}

bool Pose::is_finite() const {
  return position.allFinite() && std::isfinite(yaw) && std::isfinite(pitch) &&
         std::isfinite(roll);
}

Pose Pose::normalized() const {
  return Pose{position, normalize_angle(yaw), normalize_angle(pitch), normalize_angle(roll)};
}

namespace {

Eigen::Matrix3d rotation_from_ypr(double yaw, double pitch, double roll) {
  return (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(roll, Vec3::UnitX()))
      .toRotationMatrix();
}

}  // namespace

Eigen::Matrix4d Pose::to_matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_from_ypr(yaw, pitch, roll);
  m.topRightCorner<3, 1>() = position;
  return m;
}

Pose Pose::from_matrix(const Eigen::Matrix4d& m) {
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  Pose p;
  p.position = m.topRightCorner<3, 1>();
  p.pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  p.yaw = std::atan2(r(1, 0), r(0, 0));
  p.roll = std::atan2(r(2, 1), r(2, 2));
  return p.normalized();
}

RigidTransform RigidTransform::from_pose(const Pose& pose) {
  return {rotation_from_ypr(pose.yaw, pose.pitch, pose.roll), pose.position};
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

Eigen::Matrix4d RigidTransform::to_matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform relative_transform(const Pose& ego, const Pose& neighbor) {
  if (!ego.is_finite() || !neighbor.is_finite()) {
    throw InvalidInput("relative_transform: non-finite pose");
  }
  return RigidTransform::from_pose(ego).inverse() * RigidTransform::from_pose(neighbor);
}

std::vector<Vec3> apply_transform(std::span<const Vec3> points, const RigidTransform& t) {
  if (!t.is_valid(1e-8)) throw InvalidInput("apply_transform: rotation is not orthonormal");
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(t(p));
  return out;
}

Pose perturb_pose(const Pose& pose, const NoiseSpec& noise, std::uint64_t stream) {
  if (noise.pos_std < 0.0 || noise.rot_std < 0.0) {
    throw InvalidInput("perturb_pose: negative noise standard deviation");
  }
  if (noise.pos_std == 0.0 && noise.rot_std == 0.0) return pose;

  CounterRng rng(noise.seed, stream);
  // Draw all six components unconditionally so planar and full modes share
  // the same x, y, yaw samples.
  const double dx = rng.normal(), dy = rng.normal(), dz = rng.normal();
  const double dyaw = rng.normal(), dpitch = rng.normal(), droll = rng.normal();

  Pose out = pose;
  out.position.x() += noise.pos_std * dx;
  out.position.y() += noise.pos_std * dy;
  out.yaw = normalize_angle(pose.yaw + noise.rot_std * dyaw);
  if (noise.full_6dof) {
    out.position.z() += noise.pos_std * dz;
    out.pitch = normalize_angle(pose.pitch + noise.rot_std * dpitch);
    out.roll = normalize_angle(pose.roll + noise.rot_std * droll);
  }
  return out;
}

}  // namespace coplot
