#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ramba/association.hpp"
#include "ramba/core.hpp"
#include "ramba/dataset.hpp"
#include "ramba/eval.hpp"
#include "ramba/pgo.hpp"
#include "ramba/solver.hpp"
#include "ramba/voxelgrid.hpp"

namespace ramba {

struct KeyframeDecision {
  FrameId frame_id = 0;
  double overlap = 0.0;
  bool is_keyframe = false;
};

/// Sliding-window keyframe selection. The map holds the voxels of the last
/// `window` keyframes in world coordinates; a frame's overlap is the fraction
/// of its points that land in an occupied map voxel. Frame 0 is always a
/// keyframe.
std::vector<KeyframeDecision> select_keyframes(std::span<const RadarFrame> frames,
                                               std::span<const Pose> body_poses,
                                               const Extrinsics& ext, double voxel_size,
                                               double threshold, int window = 21);

/// Pairwise covariance-weighted point-to-point registration, run coarse to
/// fine over voxel sizes voxel_size * scale.
struct RegistrationConfig {
  double voxel_size = 0.5;
  std::vector<double> scales{8.0, 4.0, 2.0, 1.0};
  int rounds_per_level = 10;  ///< max re-association rounds per level
  LmParams lm;
  std::optional<double> huber_delta;  ///< finest level
  /// Coarse levels pair unrelated scatterers in large voxels; the kernel keeps
  /// them from dragging the pose away before the finest level.
  std::optional<double> coarse_huber_delta = 1.0;
  /// Stop re-associating within a level once the pose moves less than this
  /// (rad and m).
  double convergence_tolerance = 1e-4;
  std::size_t min_correspondences = 10;  ///< per round, below this the pair is rejected
  double tau_verify = 1.0;               ///< max per-component whitened residual RMS
  std::size_t min_inliers = 50;
  double inlier_chi2 = 7.815;  ///< squared whitened residual bound (3 dof, 95%)
};

struct RegistrationResult {
  bool accepted = false;
  std::string reason;  ///< empty when accepted
  Pose relative;       ///< moving body frame expressed in the reference body frame
  double residual_rmse = 0.0;
  std::size_t correspondences = 0;
  std::size_t inliers = 0;
  bool converged = false;
};

/// `reference_covariances[l]` and `moving_covariances[l]` hold one covariance
/// per point for level l of `config.scales`. Points are in each cloud's radar
/// frame; `initial` is the moving body pose in the reference body frame.
RegistrationResult register_pair(const RadarFrame& reference,
                                 std::span<const std::vector<DiagCov3>> reference_covariances,
                                 const RadarFrame& moving,
                                 std::span<const std::vector<DiagCov3>> moving_covariances,
                                 const Extrinsics& ext, const Pose& initial,
                                 const RegistrationConfig& config);

/// Points of frames [center - half_window, center + half_window] expressed in
/// the radar frame of frames[center].
RadarFrame build_submap(std::span<const RadarFrame> frames, std::span<const Pose> body_poses,
                        const Extrinsics& ext, std::size_t center, int half_window);

struct LoopVerification {
  LoopCandidate candidate;
  bool accepted = false;
  std::string reason;
  VerifiedLoop loop;
};

struct LoopConfig {
  int submap_half_window = 2;  ///< 5-frame submaps
  RegistrationConfig registration;
  CovarianceParams covariance;
};

/// Registers the 5-frame submaps around the two candidate frames, starting
/// from the relative pose implied by `body_poses`.
LoopVerification verify_loop(const LoopCandidate& candidate, std::span<const RadarFrame> frames,
                             std::span<const Pose> body_poses, const Extrinsics& ext,
                             const LoopConfig& config);

struct RunConfig {
  std::string profile = "snail";
  double voxel_size = 0.5;
  double keyframe_threshold = 0.6;
  int window = 21;
  int covariance_half_window = 10;
  CovarianceParams covariance;
  /// Re-estimate point covariances between outer iterations for keyframes
  /// that moved more than the thresholds below since their last estimate.
  bool refresh_covariances = false;
  double refresh_translation = 0.1;  ///< m
  double refresh_rotation = 0.017453292519943295;  ///< rad (1 deg)
  GateThresholds gate;
  int inner_iterations = 6;
  int outer_iterations = 6;
  LmParams lm;
  ImuNoise imu_noise;
  PriorConfig priors;
  std::optional<double> huber_delta;
  bool use_imu = true;
  bool use_ego_velocity = true;
  double max_gyro_bias = 1.0;
  double max_accel_bias = 5.0;
  LoopConfig loop;
  PoseGraphConfig pose_graph;
  double map_voxel = 0.5;
  std::uint64_t seed = 0;
};

/// Defaults for "snail" (0.5 m voxels, keyframe threshold 0.6) and
/// "coloradar" (0.12 m, 0.5). Throws kInvalidArgument for other names.
RunConfig profile_config(const std::string& name);

/// World-frame points of every frame under `body_poses`, voxel-downsampled
/// (voxel <= 0 keeps all points).
std::vector<Vec3> aggregate_map(std::span<const RadarFrame> frames,
                                std::span<const Pose> body_poses, const Extrinsics& ext,
                                double voxel);

struct RunResult {
  StampedTrajectory trajectory;  ///< body poses, one per input frame
  std::vector<KeyframeDecision> decisions;
  std::vector<std::size_t> keyframe_indices;
  std::vector<KeyframeState> keyframes;  ///< optimized
  std::vector<LoopVerification> loops;
  std::vector<Vec3> map;
  SolveReport report;
  LmSummary pose_graph;
};

/// Keyframe selection, covariance assignment, loop verification, outer bundle
/// adjustment and pose-graph recovery. Errors are rethrown with the stage name
/// prefixed and their category preserved.
RunResult run_pipeline(const Dataset& dataset, const RunConfig& config);

}  // namespace ramba
