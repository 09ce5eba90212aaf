#pragma once

#include <map>
#include <span>
#include <vector>

#include "ramba/core.hpp"

namespace ramba {

struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

using StampedTrajectory = std::vector<StampedPose>;

/// Index pairs (est, gt) whose timestamps agree within max_dt; each est pose
/// is matched to its nearest gt pose.
std::vector<std::pair<std::size_t, std::size_t>> associate_by_time(std::span<const StampedPose> est,
                                                                   std::span<const StampedPose> gt,
                                                                   double max_dt = 0.05);

/// Best-fit rigid transform T minimizing sum |T * src_i - dst_i|^2 (no scale).
Pose align_rigid(std::span<const Vec3> src, std::span<const Vec3> dst);

struct AteResult {
  double rmse = 0.0;
  Pose alignment;  ///< applied to est
  std::size_t matches = 0;
};

/// Translation RMSE after rigid alignment of est onto gt. Throws kData with
/// fewer than two matched pairs.
AteResult ate_rmse(std::span<const StampedPose> est, std::span<const StampedPose> gt,
                   double max_dt = 0.05);

inline const std::vector<double> kRpeDistances{40.0, 60.0, 80.0, 100.0, 120.0};

struct RpeResult {
  std::map<double, double> rmse_deg;        ///< per distance, only bins with pairs
  std::map<double, std::size_t> pair_count;  ///< per distance
  double combined_deg = 0.0;                 ///< RMSE over all pairs of all distances
  bool empty = true;                         ///< no pairs at any distance
};

/// Rotation RPE: for every start pose, the first pose whose ground-truth arc
/// length from it exceeds d; error = angle((R_est_i^T R_est_j)^-1 R_gt_i^T R_gt_j).
RpeResult rpe_rot_rmse(std::span<const StampedPose> est, std::span<const StampedPose> gt,
                       std::span<const double> distances = kRpeDistances, double max_dt = 0.05);

struct ChamferParams {
  double downsample_voxel = 0.1;  ///< m; <= 0 disables
  double truncation = 2.0;        ///< m; <= 0 disables
};

/// Voxel-centroid downsampling.
std::vector<Vec3> voxel_downsample(std::span<const Vec3> cloud, double voxel);

/// Symmetric Chamfer-L1 in cm: mean of the two directed mean nearest-neighbor
/// distances (clipped at truncation) after downsampling. Throws kData on an
/// empty cloud.
double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b,
                  const ChamferParams& params = {});

struct MetricReport {
  double ate_rmse_m = 0.0;
  RpeResult rpe;
  double chamfer_l1_cm = -1.0;  ///< negative when maps were not supplied
  Pose alignment;
};

}  // namespace ramba
