#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ramba/association.hpp"
#include "ramba/core.hpp"
#include "ramba/factors.hpp"
#include "ramba/sparse_lm.hpp"

namespace ramba {

struct PriorConfig {
  bool enabled = true;
  /// Tight enough to hold the gauge against large early steps.
  Mat6 pose_covariance = Mat6::Identity() * 1e-8;  ///< (rot rad^2, trans m^2)
  Mat6 bias_covariance = Mat6::Identity() * 1e-4;
};

/// Keyframe bundle-adjustment problem: the unknowns plus every factor's data.
/// Keyframe arrays (states, imu, ego, fixed) are index-aligned; imu[i] links
/// keyframes i and i + 1.
struct Problem {
  std::vector<KeyframeState> states;
  Extrinsics ext;
  std::vector<Correspondence> correspondences;
  std::vector<PreintegratedImu> imu;
  std::vector<std::optional<EgoVelocityMeasurement>> ego;
  ImuNoise imu_noise;
  Pose pose_prior;
  Vec6 bias_prior = Vec6::Zero();
  PriorConfig priors;
  std::vector<bool> fixed;
  /// Huber threshold on whitened geometric residual norms; empty for plain
  /// Mahalanobis cost.
  std::optional<double> huber_delta;

  /// All factor blocks at `at`, state indices filled in, robust weighting
  /// folded into sqrt_information.
  std::vector<FactorBlock> factors(const std::vector<KeyframeState>& at) const;
  /// Sum of (robustified) squared whitened residuals.
  double objective(const std::vector<KeyframeState>& at) const;
  double objective() const { return objective(states); }
};

/// Mahalanobis geometric cost of a correspondence set, summed term by term.
double geometric_cost(std::span<const Correspondence> correspondences,
                      std::span<const KeyframeState> states, const Extrinsics& ext);

struct SolveReport {
  std::vector<double> objective;  ///< objective after every inner iteration, all outer iterations
  std::vector<double> step_norms;
  std::vector<std::size_t> correspondence_counts;  ///< one per outer iteration
  std::vector<LmSummary> inner;
  double final_gradient_norm = 0.0;
  double wall_time_s = 0.0;
  std::vector<std::string> diagnostics;
};

/// Levenberg-Marquardt on the stacked 15-dim keyframe tangents; updates
/// problem.states in place.
SolveReport solve_inner(Problem& problem, const LmParams& params = {});

struct OuterConfig {
  int outer_iterations = 6;
  LmParams inner;
  double voxel_size = 0.5;
  GateThresholds gate;
  PriorConfig priors;
  std::optional<double> huber_delta;
  double max_gyro_bias = 1.0;   ///< rad/s
  double max_accel_bias = 5.0;  ///< m/s^2
};

/// Sensor data for the keyframes, index-aligned with the initial states.
struct KeyframeData {
  std::span<const RadarFrame> frames;
  std::vector<std::vector<DiagCov3>> covariances;
  std::vector<PreintegratedImu> imu;  ///< size M - 1, may be empty to drop IMU factors
  std::vector<std::optional<EgoVelocityMeasurement>> ego;  ///< size M or empty
  std::vector<LoopWindow> loops;
  Extrinsics ext;
  ImuNoise imu_noise;
  /// Optional hook to refresh point covariances between outer iterations.
  std::function<void(const std::vector<KeyframeState>&, std::vector<std::vector<DiagCov3>>&)>
      refresh_covariances;
};

struct OuterResult {
  std::vector<KeyframeState> states;
  SolveReport report;
};

/// Alternates association (world grid + validity gate) and solve_inner. The
/// first keyframe's initial pose and biases anchor the priors. Throws
/// kData when an outer iteration yields no correspondences.
OuterResult solve_outer(KeyframeData& data, std::vector<KeyframeState> initial,
                        const OuterConfig& config);

}  // namespace ramba
