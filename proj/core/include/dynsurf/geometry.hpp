#pragma once

// Rigid-transform and dual-quaternion algebra. Everything is double
// precision; quaternions are stored as (w, x, y, z).

#include <Eigen/Dense>
#include <optional>
#include <span>

namespace dynsurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Vector4d;   // (w, x, y, z)
using Mat4 = Eigen::Matrix4d;

inline Quat quat_identity() { return Quat(1, 0, 0, 0); }

inline Quat quat_conjugate(const Quat& q) { return Quat(q[0], -q[1], -q[2], -q[3]); }

Quat quat_multiply(const Quat& a, const Quat& b);

// Matrix of left multiplication: quat_multiply(q, p) == quat_left_matrix(q) * p.
Mat4 quat_left_matrix(const Quat& q);

// Matrix of right multiplication: quat_multiply(p, q) == quat_right_matrix(q) * p.
Mat4 quat_right_matrix(const Quat& q);

// Unit quaternion for a rotation vector (axis * angle).
Quat quat_from_rotvec(const Vec3& omega);

Quat quat_from_matrix(const Mat3& rotation);
Mat3 matrix_from_quat(const Quat& q);

// A rigid transform: x -> rotation * x + translation.
struct Se3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Se3 identity() { return Se3{}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 rotate(const Vec3& d) const { return rotation * d; }

  Se3 inverse() const {
    Se3 inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  Se3 operator*(const Se3& rhs) const {
    Se3 out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  // Orthonormality and det(+1), used to validate inputs and re-normalize
  // after incremental updates.
  bool is_valid(double tol = 1e-6) const;
  void renormalize_rotation();
};

// Left-composes the small motion (exp([omega]x), delta_t) onto `t`.
Se3 se3_increment(const Vec3& omega, const Vec3& delta_t, const Se3& t);

struct DualQuaternion {
  Quat real = quat_identity();
  Quat dual = Quat::Zero();

  static DualQuaternion from_se3(const Se3& t);
  Se3 to_se3() const;

  DualQuaternion operator*(const DualQuaternion& rhs) const;

  // Full dual-number normalization; afterwards |real| = 1 and
  // dot(real, dual) = 0. Requires |real| > 0.
  DualQuaternion normalized() const;

  Vec3 apply_point(const Vec3& p) const;
  Vec3 rotate(const Vec3& d) const;
};

// Dual quaternion of the left-increment (exp([omega]x), delta_t).
DualQuaternion dq_increment(const Vec3& omega, const Vec3& delta_t);

inline constexpr double kDegenerateBlendRealNorm = 1e-8;

// Weighted dual-quaternion blend, Gaussian-weight convention: weights are
// used raw (no pre-normalization), the summed dual quaternion is sign
// corrected against the first term and then normalized. Returns nullopt when
// the weighted sum has real-part norm below kDegenerateBlendRealNorm.
std::optional<DualQuaternion> blend_dual_quaternions(
    std::span<const DualQuaternion> dqs, std::span<const double> weights);

std::optional<Se3> blend_to_se3(std::span<const DualQuaternion> dqs,
                                std::span<const double> weights);

// exp(-|x - p|^2 / (2 sigma^2))
double skinning_weight(const Vec3& x, const Vec3& node_position, double sigma);

}  // namespace dynsurf
