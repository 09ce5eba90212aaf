#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

namespace ramba {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

using FrameId = std::int64_t;

// SO(3) helpers. Exp/Log use the axis-angle vector; the Jacobians follow the
// usual right-Jacobian convention Exp(w + dw) ~= Exp(w) Exp(Jr(w) dw).
namespace so3 {

Mat3 hat(const Vec3& w);
Mat3 right_jacobian(const Vec3& w);
Mat3 right_jacobian_inverse(const Vec3& w);
Mat3 left_jacobian(const Vec3& w);
Mat3 left_jacobian_inverse(const Vec3& w);

}  // namespace so3

/// Element of SO(3), stored as a unit quaternion and renormalized after every
/// composition.
class Rotation {
 public:
  Rotation() : q_(Eigen::Quaterniond::Identity()) {}
  explicit Rotation(const Eigen::Quaterniond& q);
  explicit Rotation(const Mat3& m);

  static Rotation identity() { return Rotation(); }
  static Rotation exp(const Vec3& w);
  static Rotation about_axis(const Vec3& axis, double angle);

  /// Axis-angle vector with norm in [0, pi].
  Vec3 log() const;
  double angle() const { return log().norm(); }

  Rotation inverse() const { return Rotation(q_.conjugate()); }
  Rotation operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }
  Vec3 operator*(const Vec3& v) const { return q_ * v; }

  Mat3 matrix() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& quaternion() const { return q_; }

 private:
  Eigen::Quaterniond q_;
};

/// Rigid transform x -> R x + t.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Rotation& r, const Vec3& t) : rotation(r), translation(t) {}

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Rotation(), t}; }

  Pose inverse() const;
  Pose operator*(const Pose& other) const;
  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
};

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);
/// inverse(a) * b.
Pose between(const Pose& a, const Pose& b);

/// (Log R, t) of a pose; the chart used by pose priors and pose-graph edges.
Vec6 local_coordinates(const Pose& p);

/// 15-dim tangent, ordered [rot, trans, vel, bg, ba].
using Tangent = Vec15;

namespace tangent {
inline constexpr int kRot = 0;
inline constexpr int kTrans = 3;
inline constexpr int kVel = 6;
inline constexpr int kBiasGyro = 9;
inline constexpr int kBiasAccel = 12;
inline constexpr int kDim = 15;
}  // namespace tangent

struct KeyframeState {
  Pose pose;  ///< body in world
  Vec3 velocity_w = Vec3::Zero();
  Vec3 bias_gyro = Vec3::Zero();
  Vec3 bias_accel = Vec3::Zero();
  double timestamp = 0.0;
  FrameId frame_id = 0;
};

struct Extrinsics {
  Pose radar_in_body;  ///< (R_BR, p_BR)
  Vec3 gravity_w{0.0, 0.0, -9.81};
};

/// Timestamped stationary radar points in the radar frame, plus the measured
/// radar ego velocity when the front-end provides one.
struct RadarFrame {
  FrameId id = 0;
  double timestamp = 0.0;
  std::vector<Vec3> points;
  bool has_ego_velocity = false;
  Vec3 ego_velocity = Vec3::Zero();
  Mat3 ego_covariance = Mat3::Identity() * 0.05 * 0.05;
};

/// World-frame position of a radar-frame point: R_WB (R_BR p + p_BR) + t_WB.
/// Throws kInvalidArgument on non-finite input.
Vec3 transform_radar_point(const KeyframeState& state, const Extrinsics& ext, const Vec3& p_r);

/// Rotation: Exp(delta_rot) * R (left composition); everything else additive.
KeyframeState retract(const KeyframeState& state, const Tangent& delta);

/// Inverse of retract: the tangent taking `from` to `to`.
Tangent local_difference(const KeyframeState& from, const KeyframeState& to);

/// Rotation angle (rad) and translation distance (m) between two poses.
struct PoseError {
  double rotation = 0.0;
  double translation = 0.0;
};
PoseError pose_error(const Pose& a, const Pose& b);

}  // namespace ramba
