#include "ramba/core.hpp"

#include <cmath>
#include <string>

#include "ramba/error.hpp"

namespace ramba {

const char* to_string(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument:
      return "invalid-argument";
    case ErrorCategory::kPrecondition:
      return "precondition";
    case ErrorCategory::kData:
      return "data";
    case ErrorCategory::kIo:
      return "io";
    case ErrorCategory::kStructural:
      return "structural";
    case ErrorCategory::kNumerical:
      return "numerical";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument:
      return 2;
    case ErrorCategory::kPrecondition:
      return 3;
    case ErrorCategory::kData:
      return 4;
    case ErrorCategory::kIo:
      return 5;
    case ErrorCategory::kStructural:
      return 6;
    case ErrorCategory::kNumerical:
      return 7;
  }
  return 1;
}

namespace so3 {

namespace {
constexpr double kSmallAngle = 1e-5;
}

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),  //
      w.z(), 0.0, -w.x(),   //
      -w.y(), w.x(), 0.0;
  return m;
}

Mat3 right_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = hat(w);
  if (theta2 < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() - 0.5 * W + W * W / 6.0;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() - (1.0 - std::cos(theta)) / theta2 * W +
         (theta - std::sin(theta)) / (theta2 * theta) * W * W;
}

Mat3 right_jacobian_inverse(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = hat(w);
  if (theta2 < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + W * W / 12.0;
  }
  const double theta = std::sqrt(theta2);
  const double coeff = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + coeff * W * W;
}

Mat3 left_jacobian(const Vec3& w) { return right_jacobian(-w); }
Mat3 left_jacobian_inverse(const Vec3& w) { return right_jacobian_inverse(-w); }

}  // namespace so3

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(q.normalized()) {
  if (q_.w() < 0.0) q_.coeffs() *= -1.0;
}

Rotation::Rotation(const Mat3& m) : Rotation(Eigen::Quaterniond(m)) {}

Rotation Rotation::exp(const Vec3& w) {
  const double theta = w.norm();
  const double half = 0.5 * theta;
  double k;  // sin(theta/2) / theta
  if (theta < 1e-8) {
    k = 0.5 - theta * theta / 48.0;
  } else {
    k = std::sin(half) / theta;
  }
  return Rotation(Eigen::Quaterniond(std::cos(half), k * w.x(), k * w.y(), k * w.z()));
}

Rotation Rotation::about_axis(const Vec3& axis, double angle) {
  return exp(axis.normalized() * angle);
}

Vec3 Rotation::log() const {
  const Vec3 v = q_.vec();
  const double w = q_.w();  // >= 0 by construction
  const double n = v.norm();
  if (n < 1e-10) {
    // 2 * atan(n / w) / n ~= 2 / w (1 - n^2 / (3 w^2))
    return (2.0 / w - 2.0 * n * n / (3.0 * w * w * w)) * v;
  }
  return 2.0 * std::atan2(n, w) / n * v;
}

Pose Pose::inverse() const {
  const Rotation r_inv = rotation.inverse();
  return {r_inv, -(r_inv * translation)};
}

Pose Pose::operator*(const Pose& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

Pose compose(const Pose& a, const Pose& b) { return a * b; }
Pose inverse(const Pose& p) { return p.inverse(); }
Pose between(const Pose& a, const Pose& b) { return a.inverse() * b; }

Vec6 local_coordinates(const Pose& p) {
  Vec6 out;
  out << p.rotation.log(), p.translation;
  return out;
}

namespace {
bool finite(const Vec3& v) { return v.allFinite(); }
}  // namespace

Vec3 transform_radar_point(const KeyframeState& state, const Extrinsics& ext, const Vec3& p_r) {
  if (!finite(p_r) || !finite(state.pose.translation) ||
      !state.pose.rotation.quaternion().coeffs().allFinite() ||
      !finite(ext.radar_in_body.translation) ||
      !ext.radar_in_body.rotation.quaternion().coeffs().allFinite()) {
    fail(ErrorCategory::kInvalidArgument, "transform_radar_point: non-finite input");
  }
  const Vec3 p_b = ext.radar_in_body * p_r;
  return state.pose * p_b;
}

KeyframeState retract(const KeyframeState& state, const Tangent& delta) {
  using namespace tangent;
  KeyframeState out = state;
  const Vec3 dr = delta.segment<3>(kRot);
  if (dr.squaredNorm() > 0.0) out.pose.rotation = Rotation::exp(dr) * state.pose.rotation;
  out.pose.translation += delta.segment<3>(kTrans);
  out.velocity_w += delta.segment<3>(kVel);
  out.bias_gyro += delta.segment<3>(kBiasGyro);
  out.bias_accel += delta.segment<3>(kBiasAccel);
  return out;
}

Tangent local_difference(const KeyframeState& from, const KeyframeState& to) {
  using namespace tangent;
  Tangent d;
  d.segment<3>(kRot) = (to.pose.rotation * from.pose.rotation.inverse()).log();
  d.segment<3>(kTrans) = to.pose.translation - from.pose.translation;
  d.segment<3>(kVel) = to.velocity_w - from.velocity_w;
  d.segment<3>(kBiasGyro) = to.bias_gyro - from.bias_gyro;
  d.segment<3>(kBiasAccel) = to.bias_accel - from.bias_accel;
  return d;
}

PoseError pose_error(const Pose& a, const Pose& b) {
  return {(a.rotation.inverse() * b.rotation).angle(), (a.translation - b.translation).norm()};
}

}  // namespace ramba
