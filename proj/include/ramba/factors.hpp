#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ramba/association.hpp"
#include "ramba/core.hpp"

namespace ramba {

struct ImuSample {
  double timestamp = 0.0;
  Vec3 gyro = Vec3::Zero();   ///< rad/s, body frame
  Vec3 accel = Vec3::Zero();  ///< m/s^2, specific force in the body frame
};

/// Continuous-time IMU noise densities plus the constant true biases the
/// simulator injects (ignored by preintegration).
struct ImuNoise {
  double gyro_noise_density = 1e-3;   ///< rad/s/sqrt(Hz)
  double accel_noise_density = 1e-2;  ///< m/s^2/sqrt(Hz)
  double gyro_walk_density = 1e-5;    ///< rad/s^2/sqrt(Hz)
  double accel_walk_density = 1e-4;   ///< m/s^3/sqrt(Hz)
  Vec3 true_bias_gyro = Vec3::Zero();
  Vec3 true_bias_accel = Vec3::Zero();
};

/// Relative motion between two timestamps summarized from IMU samples.
/// Covariance and the rows of bias_jacobians are ordered (rot, vel, pos);
/// the columns of bias_jacobians are (b_g, b_a).
struct PreintegratedImu {
  double dt = 0.0;
  Rotation delta_R;
  Vec3 delta_v = Vec3::Zero();
  Vec3 delta_p = Vec3::Zero();
  Mat9 covariance = Mat9::Zero();
  Eigen::Matrix<double, 9, 6> bias_jacobians = Eigen::Matrix<double, 9, 6>::Zero();
  Vec3 bias_gyro_lin = Vec3::Zero();
  Vec3 bias_accel_lin = Vec3::Zero();

  Mat3 dR_dbg() const { return bias_jacobians.block<3, 3>(0, 0); }
  Mat3 dv_dbg() const { return bias_jacobians.block<3, 3>(3, 0); }
  Mat3 dv_dba() const { return bias_jacobians.block<3, 3>(3, 3); }
  Mat3 dp_dbg() const { return bias_jacobians.block<3, 3>(6, 0); }
  Mat3 dp_dba() const { return bias_jacobians.block<3, 3>(6, 3); }
};

/// Midpoint-rule on-manifold preintegration over [t0, t1]. Samples must be
/// strictly increasing and bracket the interval; values at t0/t1 are linearly
/// interpolated. Throws kData on coverage gaps wider than twice the nominal
/// sample period (median spacing when `nominal_period` <= 0).
PreintegratedImu preintegrate(std::span<const ImuSample> samples, double t0, double t1,
                              const Vec3& bias_gyro, const Vec3& bias_accel,
                              const ImuNoise& noise, double nominal_period = 0.0);

/// Linear interpolation of the IMU stream at time t (clamped to the ends).
ImuSample interpolate_imu(std::span<const ImuSample> samples, double t);

/// Residual, Jacobians (one block per involved state, columns in Tangent order)
/// and the square-root information that whitens the residual.
struct FactorBlock {
  Eigen::VectorXd residual;
  std::vector<std::size_t> states;
  std::vector<Eigen::MatrixXd> jacobians;
  Eigen::MatrixXd sqrt_information;

  Eigen::VectorXd whitened() const { return sqrt_information * residual; }
  double cost() const { return whitened().squaredNorm(); }
};

/// Inverse Cholesky factor of a covariance: L^-1 with L L^T = cov. Throws
/// kNumerical when cov is not positive definite.
Eigen::MatrixXd sqrt_information_from_covariance(const Eigen::MatrixXd& cov);

/// World-frame covariance of a radar-frame point's diagonal covariance for a
/// given body orientation (the radar-to-world rotation is R_WB R_BR).
Mat3 point_world_covariance(const Rotation& body_rotation, const Extrinsics& ext,
                            const DiagCov3& cov);

/// p_ij - p_ik in the world frame, weighted by (C_ij + C_ik)^-1. The weight is
/// evaluated at the given states and treated as constant in the Jacobians.
FactorBlock geometric_factor(const Correspondence& c, const KeyframeState& s_j,
                             const KeyframeState& s_k, const Extrinsics& ext);

/// 15-dim residual [rot, vel, pos, b_g, b_a] between consecutive keyframes.
FactorBlock imu_residual(const PreintegratedImu& pre, const KeyframeState& s_a,
                       const KeyframeState& s_b, const Vec3& gravity_w, const ImuNoise& noise);

struct EgoVelocityMeasurement {
  Vec3 v_r = Vec3::Zero();  ///< measured radar ego velocity
  Mat3 covariance = Mat3::Identity() * 0.05 * 0.05;
  /// Gyro reading at the frame time; the state's current gyro bias is
  /// subtracted inside the residual.
  Vec3 omega_b = Vec3::Zero();
};

/// R_BR^T (R_WB^T v^W + (omega - b_g) x p_BR) - v_r. Throws kData when the
/// measurement covariance is not positive definite.
FactorBlock ego_velocity_residual(const KeyframeState& s, const EgoVelocityMeasurement& m,
                                const Extrinsics& ext);

/// local_coordinates(prior^-1 * pose), ordered (rot, trans).
FactorBlock pose_prior_factor(const KeyframeState& s, const Pose& prior, const Mat6& covariance);

/// [b_g; b_a] - prior.
FactorBlock bias_prior_factor(const KeyframeState& s, const Vec6& prior, const Mat6& covariance);

/// Both first-keyframe priors: {pose, bias}.
std::pair<FactorBlock, FactorBlock> prior_factors(const KeyframeState& s1, const Pose& pose_prior,
                                                  const Mat6& pose_covariance,
                                                  const Vec6& bias_prior,
                                                  const Mat6& bias_covariance);

}  // namespace ramba
