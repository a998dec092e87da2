#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

namespace semap {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rotation + translation. Constructed values are kept orthonormal with det +1.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  /// Rotation about a unit axis (radians) followed by translation.
  static RigidTransform from_axis_angle(const Vec3& axis, double angle, const Vec3& t);

  Mat4 matrix() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& v) const { return rotation * v; }
  RigidTransform inverse() const;
  RigidTransform operator*(const RigidTransform& rhs) const;

  /// Rotation angle in radians.
  double angle() const;
  /// Projects the rotation block back onto SO(3) (SVD).
  void reorthonormalize();
  /// True when RᵀR = I and det R = +1 within `tol`.
  bool is_rigid(double tol = 1e-6) const;
};

/// Angular difference between two transforms' rotations, radians.
double rotation_error(const RigidTransform& a, const RigidTransform& b);
double translation_error(const RigidTransform& a, const RigidTransform& b);

bool all_finite(const Vec3& v);

}  // namespace semap
