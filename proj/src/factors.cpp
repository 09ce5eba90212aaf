#include "ramba/factors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <string>

#include "ramba/error.hpp"

namespace ramba {

using so3::hat;
using namespace tangent;

namespace {

using Mat9x3 = Eigen::Matrix<double, 9, 3>;

double median_spacing(std::span<const ImuSample> s) {
  std::vector<double> d;
  d.reserve(s.size());
  for (std::size_t i = 1; i < s.size(); ++i) d.push_back(s[i].timestamp - s[i - 1].timestamp);
  if (d.empty()) return 0.0;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

}  // namespace

ImuSample interpolate_imu(std::span<const ImuSample> samples, double t) {
  if (samples.empty()) fail(ErrorCategory::kData, "interpolate_imu: empty IMU stream");
  if (t <= samples.front().timestamp) return {t, samples.front().gyro, samples.front().accel};
  if (t >= samples.back().timestamp) return {t, samples.back().gyro, samples.back().accel};
  const auto it = std::upper_bound(samples.begin(), samples.end(), t,
                                   [](double v, const ImuSample& s) { return v < s.timestamp; });
  const ImuSample& b = *it;
  const ImuSample& a = *(it - 1);
  const double alpha = (t - a.timestamp) / (b.timestamp - a.timestamp);
  return {t, (1.0 - alpha) * a.gyro + alpha * b.gyro, (1.0 - alpha) * a.accel + alpha * b.accel};
}

PreintegratedImu preintegrate(std::span<const ImuSample> samples, double t0, double t1,
                              const Vec3& bias_gyro, const Vec3& bias_accel,
                              const ImuNoise& noise, double nominal_period) {
  if (!(t1 >= t0)) fail(ErrorCategory::kInvalidArgument, "preintegrate: t1 < t0");
  PreintegratedImu out;
  out.bias_gyro_lin = bias_gyro;
  out.bias_accel_lin = bias_accel;
  if (t1 == t0) return out;

  constexpr double kCoverTol = 1e-9;
  if (samples.empty() || samples.front().timestamp > t0 + kCoverTol ||
      samples.back().timestamp < t1 - kCoverTol) {
    fail(ErrorCategory::kData, "preintegrate: IMU samples do not cover [" + std::to_string(t0) +
                                   ", " + std::to_string(t1) + "]");
  }

  // Raw samples bracketing the interval.
  auto lo = std::upper_bound(samples.begin(), samples.end(), t0,
                             [](double v, const ImuSample& s) { return v < s.timestamp; });
  if (lo != samples.begin()) --lo;
  auto hi = std::lower_bound(samples.begin(), samples.end(), t1,
                             [](const ImuSample& s, double v) { return s.timestamp < v; });
  if (hi == samples.end()) --hi;
  const std::span<const ImuSample> bracket(&*lo, static_cast<std::size_t>(hi - lo) + 1);
  for (std::size_t i = 1; i < bracket.size(); ++i) {
    if (!(bracket[i].timestamp > bracket[i - 1].timestamp)) {
      fail(ErrorCategory::kData, "preintegrate: IMU timestamps not strictly increasing at t=" +
                                     std::to_string(bracket[i].timestamp));
    }
  }
  const double nominal = nominal_period > 0.0 ? nominal_period : median_spacing(bracket);
  if (nominal > 0.0) {
    for (std::size_t i = 1; i < bracket.size(); ++i) {
      if (bracket[i].timestamp - bracket[i - 1].timestamp > 2.0 * nominal) {
        fail(ErrorCategory::kData, "preintegrate: IMU data gap after t=" +
                                       std::to_string(bracket[i - 1].timestamp));
      }
    }
  }

  std::vector<ImuSample> nodes;
  nodes.reserve(bracket.size() + 2);
  nodes.push_back(interpolate_imu(samples, t0));
  for (const ImuSample& s : bracket) {
    if (s.timestamp > t0 && s.timestamp < t1) nodes.push_back(s);
  }
  nodes.push_back(interpolate_imu(samples, t1));

  Mat3 dR = Mat3::Identity();
  Vec3 dv = Vec3::Zero();
  Vec3 dp = Vec3::Zero();
  Mat3 j_r_bg = Mat3::Zero();
  Mat3 j_v_bg = Mat3::Zero();
  Mat3 j_v_ba = Mat3::Zero();
  Mat3 j_p_bg = Mat3::Zero();
  Mat3 j_p_ba = Mat3::Zero();
  Mat9 cov = Mat9::Zero();
  Rotation rot;
  double total = 0.0;

  const double sg2 = noise.gyro_noise_density * noise.gyro_noise_density;
  const double sa2 = noise.accel_noise_density * noise.accel_noise_density;

  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
    const ImuSample& n0 = nodes[i];
    const ImuSample& n1 = nodes[i + 1];
    const double dt = n1.timestamp - n0.timestamp;
    if (!(dt > 0.0)) continue;
    const double dt2 = dt * dt;

    const Vec3 w = 0.5 * (n0.gyro + n1.gyro) - bias_gyro;
    const Rotation inc = Rotation::exp(w * dt);
    const Mat3 inc_t = inc.matrix().transpose();
    const Mat3 jr = so3::right_jacobian(w * dt);
    const Rotation rot_next = rot * inc;
    const Mat3 R0 = dR;
    const Mat3 R1 = rot_next.matrix();
    const Vec3 a0 = n0.accel - bias_accel;
    const Vec3 a1 = n1.accel - bias_accel;
    const Vec3 a_mid = 0.5 * (R0 * a0 + R1 * a1);

    // Bias Jacobians of this discrete scheme.
    const Mat3 j_r_bg_next = inc_t * j_r_bg - jr * dt;
    const Mat3 da_dbg = -0.5 * (R0 * hat(a0) * j_r_bg + R1 * hat(a1) * j_r_bg_next);
    const Mat3 da_dba = -0.5 * (R0 + R1);
    j_p_bg += j_v_bg * dt + 0.5 * da_dbg * dt2;
    j_p_ba += j_v_ba * dt + 0.5 * da_dba * dt2;
    j_v_bg += da_dbg * dt;
    j_v_ba += da_dba * dt;
    j_r_bg = j_r_bg_next;

    // First-order error propagation, error state (rot, vel, pos).
    Mat9 A = Mat9::Identity();
    const Mat3 dvel_drot = -0.5 * dt * (R0 * hat(a0) + R1 * hat(a1) * inc_t);
    A.block<3, 3>(0, 0) = inc_t;
    A.block<3, 3>(3, 0) = dvel_drot;
    A.block<3, 3>(6, 0) = 0.5 * dt * dvel_drot;
    A.block<3, 3>(6, 3) = dt * Mat3::Identity();
    Mat9x3 Bg = Mat9x3::Zero();
    Bg.block<3, 3>(0, 0) = jr * dt;
    Bg.block<3, 3>(3, 0) = -0.5 * dt * R1 * hat(a1) * jr * dt;
    Bg.block<3, 3>(6, 0) = -0.25 * dt2 * R1 * hat(a1) * jr * dt;
    Mat9x3 Ba = Mat9x3::Zero();
    Ba.block<3, 3>(3, 0) = 0.5 * dt * (R0 + R1);
    Ba.block<3, 3>(6, 0) = 0.25 * dt2 * (R0 + R1);
    cov = A * cov * A.transpose() + (sg2 / dt) * Bg * Bg.transpose() +
          (sa2 / dt) * Ba * Ba.transpose();

    dp += dv * dt + 0.5 * a_mid * dt2;
    dv += a_mid * dt;
    rot = rot_next;
    dR = R1;
    total += dt;
  }

  out.dt = total;
  out.delta_R = rot;
  out.delta_v = dv;
  out.delta_p = dp;
  out.covariance = 0.5 * (cov + cov.transpose());
  out.bias_jacobians.block<3, 3>(0, 0) = j_r_bg;
  out.bias_jacobians.block<3, 3>(3, 0) = j_v_bg;
  out.bias_jacobians.block<3, 3>(3, 3) = j_v_ba;
  out.bias_jacobians.block<3, 3>(6, 0) = j_p_bg;
  out.bias_jacobians.block<3, 3>(6, 3) = j_p_ba;
  return out;
}

Eigen::MatrixXd sqrt_information_from_covariance(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    fail(ErrorCategory::kNumerical, "covariance is not positive definite");
  }
  const Eigen::MatrixXd L = llt.matrixL();
  return L.triangularView<Eigen::Lower>().solve(
      Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
}

Mat3 point_world_covariance(const Rotation& body_rotation, const Extrinsics& ext,
                            const DiagCov3& cov) {
  return world_covariance(body_rotation * ext.radar_in_body.rotation, cov);
}

FactorBlock geometric_factor(const Correspondence& c, const KeyframeState& s_j,
                             const KeyframeState& s_k, const Extrinsics& ext) {
  const Vec3 q_j = ext.radar_in_body * c.p_fj;  // body frame
  const Vec3 q_k = ext.radar_in_body * c.p_fk;
  const Vec3 rq_j = s_j.pose.rotation * q_j;
  const Vec3 rq_k = s_k.pose.rotation * q_k;

  FactorBlock f;
  f.residual = (rq_j + s_j.pose.translation) - (rq_k + s_k.pose.translation);
  f.states = {c.index_j, c.index_k};

  Eigen::MatrixXd jj = Eigen::MatrixXd::Zero(3, kDim);
  jj.block<3, 3>(0, kRot) = -hat(rq_j);
  jj.block<3, 3>(0, kTrans) = Mat3::Identity();
  Eigen::MatrixXd jk = Eigen::MatrixXd::Zero(3, kDim);
  jk.block<3, 3>(0, kRot) = hat(rq_k);
  jk.block<3, 3>(0, kTrans) = -Mat3::Identity();
  f.jacobians = {std::move(jj), std::move(jk)};

  const Mat3 cov = point_world_covariance(s_j.pose.rotation, ext, c.cov_fj) +
                   point_world_covariance(s_k.pose.rotation, ext, c.cov_fk);
  f.sqrt_information = sqrt_information_from_covariance(cov);
  return f;
}

FactorBlock imu_residual(const PreintegratedImu& pre, const KeyframeState& s_a,
                         const KeyframeState& s_b, const Vec3& gravity_w, const ImuNoise& noise) {
  const double dt = pre.dt;
  const Mat3 Ra_t = s_a.pose.rotation.matrix().transpose();
  const Mat3 Rb_t = s_b.pose.rotation.matrix().transpose();
  const Vec3 dbg = s_a.bias_gyro - pre.bias_gyro_lin;
  const Vec3 dba = s_a.bias_accel - pre.bias_accel_lin;

  const Vec3 corr = pre.dR_dbg() * dbg;
  const Rotation dR_corr = pre.delta_R * Rotation::exp(corr);
  const Vec3 dv_corr = pre.delta_v + pre.dv_dbg() * dbg + pre.dv_dba() * dba;
  const Vec3 dp_corr = pre.delta_p + pre.dp_dbg() * dbg + pre.dp_dba() * dba;

  const Rotation err = dR_corr.inverse() * s_a.pose.rotation.inverse() * s_b.pose.rotation;
  const Vec3 r_rot = err.log();
  const Vec3 u_v = s_b.velocity_w - s_a.velocity_w - gravity_w * dt;
  const Vec3 u_p = s_b.pose.translation - s_a.pose.translation - s_a.velocity_w * dt -
                   0.5 * gravity_w * dt * dt;
  const Vec3 r_v = Ra_t * u_v - dv_corr;
  const Vec3 r_p = Ra_t * u_p - dp_corr;
  const Vec3 r_bg = s_b.bias_gyro - s_a.bias_gyro;
  const Vec3 r_ba = s_b.bias_accel - s_a.bias_accel;

  FactorBlock f;
  f.residual.resize(15);
  f.residual << r_rot, r_v, r_p, r_bg, r_ba;
  f.states = {static_cast<std::size_t>(0), static_cast<std::size_t>(1)};

  const Mat3 jr_inv = so3::right_jacobian_inverse(r_rot);
  Eigen::MatrixXd ja = Eigen::MatrixXd::Zero(15, kDim);
  Eigen::MatrixXd jb = Eigen::MatrixXd::Zero(15, kDim);
  // rotation rows
  ja.block<3, 3>(0, kRot) = -jr_inv * Rb_t;
  jb.block<3, 3>(0, kRot) = jr_inv * Rb_t;
  ja.block<3, 3>(0, kBiasGyro) =
      -jr_inv * err.matrix().transpose() * so3::right_jacobian(corr) * pre.dR_dbg();
  // velocity rows
  ja.block<3, 3>(3, kRot) = Ra_t * hat(u_v);
  ja.block<3, 3>(3, kVel) = -Ra_t;
  jb.block<3, 3>(3, kVel) = Ra_t;
  ja.block<3, 3>(3, kBiasGyro) = -pre.dv_dbg();
  ja.block<3, 3>(3, kBiasAccel) = -pre.dv_dba();
  // position rows
  ja.block<3, 3>(6, kRot) = Ra_t * hat(u_p);
  ja.block<3, 3>(6, kTrans) = -Ra_t;
  ja.block<3, 3>(6, kVel) = -Ra_t * dt;
  jb.block<3, 3>(6, kTrans) = Ra_t;
  ja.block<3, 3>(6, kBiasGyro) = -pre.dp_dbg();
  ja.block<3, 3>(6, kBiasAccel) = -pre.dp_dba();
  // bias random walk rows
  ja.block<3, 3>(9, kBiasGyro) = -Mat3::Identity();
  jb.block<3, 3>(9, kBiasGyro) = Mat3::Identity();
  ja.block<3, 3>(12, kBiasAccel) = -Mat3::Identity();
  jb.block<3, 3>(12, kBiasAccel) = Mat3::Identity();
  f.jacobians = {std::move(ja), std::move(jb)};

  constexpr double kMinVariance = 1e-12;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(15, 15);
  cov.block<9, 9>(0, 0) = pre.covariance;
  cov.block<3, 3>(9, 9) =
      Mat3::Identity() * noise.gyro_walk_density * noise.gyro_walk_density * dt;
  cov.block<3, 3>(12, 12) =
      Mat3::Identity() * noise.accel_walk_density * noise.accel_walk_density * dt;
  cov.diagonal().array() += kMinVariance;
  f.sqrt_information = sqrt_information_from_covariance(cov);
  return f;
}

FactorBlock ego_velocity_residual(const KeyframeState& s, const EgoVelocityMeasurement& m,
                                  const Extrinsics& ext) {
  const Mat3 rbr_t = ext.radar_in_body.rotation.matrix().transpose();
  const Mat3 rwb_t = s.pose.rotation.matrix().transpose();
  const Vec3& p_br = ext.radar_in_body.translation;
  const Vec3 omega = m.omega_b - s.bias_gyro;

  FactorBlock f;
  f.residual = rbr_t * (rwb_t * s.velocity_w + omega.cross(p_br)) - m.v_r;
  f.states = {0};
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3, kDim);
  j.block<3, 3>(0, kRot) = rbr_t * rwb_t * hat(s.velocity_w);
  j.block<3, 3>(0, kVel) = rbr_t * rwb_t;
  j.block<3, 3>(0, kBiasGyro) = rbr_t * hat(p_br);
  f.jacobians = {std::move(j)};

  const Mat3 sym = 0.5 * (m.covariance + m.covariance.transpose());
  Eigen::LLT<Mat3> llt(sym);
  if (!m.covariance.allFinite() || (m.covariance - sym).norm() > 1e-12 ||
      llt.info() != Eigen::Success) {
    fail(ErrorCategory::kData, "ego velocity covariance is not symmetric positive definite");
  }
  f.sqrt_information = sqrt_information_from_covariance(sym);
  return f;
}

FactorBlock pose_prior_factor(const KeyframeState& s, const Pose& prior, const Mat6& covariance) {
  const Pose err = prior.inverse() * s.pose;
  const Vec3 r_rot = err.rotation.log();
  FactorBlock f;
  f.residual.resize(6);
  f.residual << r_rot, err.translation;
  f.states = {0};
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(6, kDim);
  j.block<3, 3>(0, kRot) =
      so3::right_jacobian_inverse(r_rot) * s.pose.rotation.matrix().transpose();
  j.block<3, 3>(3, kTrans) = prior.rotation.matrix().transpose();
  f.jacobians = {std::move(j)};
  f.sqrt_information = sqrt_information_from_covariance(covariance);
  return f;
}

FactorBlock bias_prior_factor(const KeyframeState& s, const Vec6& prior, const Mat6& covariance) {
  FactorBlock f;
  f.residual.resize(6);
  f.residual << s.bias_gyro - prior.head<3>(), s.bias_accel - prior.tail<3>();
  f.states = {0};
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(6, kDim);
  j.block<6, 6>(0, kBiasGyro) = Mat6::Identity();
  f.jacobians = {std::move(j)};
  f.sqrt_information = sqrt_information_from_covariance(covariance);
  return f;
}

std::pair<FactorBlock, FactorBlock> prior_factors(const KeyframeState& s1, const Pose& pose_prior,
                                                  const Mat6& pose_covariance,
                                                  const Vec6& bias_prior,
                                                  const Mat6& bias_covariance) {
  return {pose_prior_factor(s1, pose_prior, pose_covariance),
          bias_prior_factor(s1, bias_prior, bias_covariance)};
}

}  // namespace ramba
