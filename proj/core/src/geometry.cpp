#include "dynsurf/geometry.hpp"

#include <cmath>

namespace dynsurf {

Quat quat_multiply(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Mat4 quat_left_matrix(const Quat& q) {
  Mat4 m;
  m << q[0], -q[1], -q[2], -q[3],
       q[1],  q[0], -q[3],  q[2],
       q[2],  q[3],  q[0], -q[1],
       q[3], -q[2],  q[1],  q[0];
  return m;
}

Mat4 quat_right_matrix(const Quat& q) {
  Mat4 m;
  m << q[0], -q[1], -q[2], -q[3],
       q[1],  q[0],  q[3], -q[2],
       q[2], -q[3],  q[0],  q[1],
       q[3],  q[2], -q[1],  q[0];
  return m;
}

Quat quat_from_rotvec(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Quat q(1.0, 0.5 * omega[0], 0.5 * omega[1], 0.5 * omega[2]);
    return q / q.norm();
  }
  const double half = 0.5 * angle;
  const Vec3 axis = omega / angle;
  const double s = std::sin(half);
  return Quat(std::cos(half), s * axis[0], s * axis[1], s * axis[2]);
}

Quat quat_from_matrix(const Mat3& rotation) {
  Eigen::Quaterniond eq(rotation);
  eq.normalize();
  Quat q(eq.w(), eq.x(), eq.y(), eq.z());
  if (q[0] < 0) q = -q;
  return q;
}

Mat3 matrix_from_quat(const Quat& q) {
  Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
  eq.normalize();
  return eq.toRotationMatrix();
}

bool Se3::is_valid(double tol) const {
  const Mat3 should_be_identity = rotation.transpose() * rotation;
  if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(rotation.determinant() - 1.0) > tol) return false;
  return translation.allFinite();
}

void Se3::renormalize_rotation() {
  rotation = matrix_from_quat(quat_from_matrix(rotation));
}

Se3 se3_increment(const Vec3& omega, const Vec3& delta_t, const Se3& t) {
  Se3 inc;
  inc.rotation = matrix_from_quat(quat_from_rotvec(omega));
  inc.translation = delta_t;
  Se3 out = inc * t;
  out.renormalize_rotation();
  return out;
}

DualQuaternion DualQuaternion::from_se3(const Se3& t) {
  DualQuaternion dq;
  dq.real = quat_from_matrix(t.rotation);
  const Quat t_quat(0.0, t.translation[0], t.translation[1], t.translation[2]);
  dq.dual = 0.5 * quat_multiply(t_quat, dq.real);
  return dq;
}

Se3 DualQuaternion::to_se3() const {
  const DualQuaternion n = normalized();
  Se3 t;
  t.rotation = matrix_from_quat(n.real);
  const Quat t_quat = quat_multiply(n.dual, quat_conjugate(n.real));
  t.translation = 2.0 * Vec3(t_quat[1], t_quat[2], t_quat[3]);
  return t;
}

DualQuaternion DualQuaternion::operator*(const DualQuaternion& rhs) const {
  DualQuaternion out;
  out.real = quat_multiply(real, rhs.real);
  out.dual = quat_multiply(real, rhs.dual) + quat_multiply(dual, rhs.real);
  return out;
}

DualQuaternion DualQuaternion::normalized() const {
  const double a = real.norm();
  const double b = real.dot(dual) / a;
  DualQuaternion out;
  out.real = real / a;
  out.dual = dual / a - (b / (a * a)) * real;
  return out;
}

Vec3 DualQuaternion::apply_point(const Vec3& p) const {
  return to_se3().apply(p);
}

Vec3 DualQuaternion::rotate(const Vec3& d) const {
  const DualQuaternion n = normalized();
  return matrix_from_quat(n.real) * d;
}

DualQuaternion dq_increment(const Vec3& omega, const Vec3& delta_t) {
  Se3 inc;
  inc.rotation = matrix_from_quat(quat_from_rotvec(omega));
  inc.translation = delta_t;
  return DualQuaternion::from_se3(inc);
}

std::optional<DualQuaternion> blend_dual_quaternions(
    std::span<const DualQuaternion> dqs, std::span<const double> weights) {
  if (dqs.empty() || dqs.size() != weights.size()) return std::nullopt;

  Quat real_sum = Quat::Zero();
  Quat dual_sum = Quat::Zero();
  const Quat& pivot = dqs[0].real;
  for (size_t i = 0; i < dqs.size(); ++i) {
    // Antipodal sign correction against the first term.
    const double sign = (pivot.dot(dqs[i].real) < 0.0) ? -1.0 : 1.0;
    const double w = sign * weights[i];
    real_sum += w * dqs[i].real;
    dual_sum += w * dqs[i].dual;
  }
  if (real_sum.norm() < kDegenerateBlendRealNorm) return std::nullopt;

  DualQuaternion sum;
  sum.real = real_sum;
  sum.dual = dual_sum;
  return sum.normalized();
}

std::optional<Se3> blend_to_se3(std::span<const DualQuaternion> dqs,
                                std::span<const double> weights) {
  const auto blended = blend_dual_quaternions(dqs, weights);
  if (!blended) return std::nullopt;
  return blended->to_se3();
}

double skinning_weight(const Vec3& x, const Vec3& node_position, double sigma) {
  const double d2 = (x - node_position).squaredNorm();
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

}  // namespace dynsurf
