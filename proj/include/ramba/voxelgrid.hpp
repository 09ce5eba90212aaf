#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "ramba/core.hpp"

namespace ramba {

struct VoxelIndex {
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t k = 0;

  auto operator<=>(const VoxelIndex&) const = default;
};

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const {
    auto h = static_cast<std::uint64_t>(v.i) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(v.j) * 19349669ULL;
    h ^= static_cast<std::uint64_t>(v.k) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

/// Per-axis floor(p / voxel_size). Throws kInvalidArgument for voxel_size <= 0.
VoxelIndex voxel_index(const Vec3& p, double voxel_size);
Vec3 voxel_center(const VoxelIndex& v, double voxel_size);

/// Diagonal point covariance (m^2). `fallback` marks voxels too sparse for a
/// sample estimate.
struct DiagCov3 {
  Vec3 variances = Vec3::Constant(1e-4);
  bool fallback = false;

  Mat3 matrix() const { return variances.asDiagonal(); }
};

struct CovarianceParams {
  int min_points = 5;
  double variance_floor = 1e-4;
  /// Isotropic variance for sparse voxels; <= 0 means voxel_size^2 / 12.
  double fallback_variance = -1.0;
};

/// Points of a temporal neighborhood expressed in the center frame's radar
/// frame and binned by voxel.
struct LocalGrid {
  double voxel_size = 0.5;
  std::size_t center = 0;
  std::size_t first = 0;  ///< first frame index in the window
  std::size_t last = 0;   ///< last frame index in the window (inclusive)
  std::unordered_map<VoxelIndex, std::vector<Vec3>, VoxelIndexHash> cells;

  std::size_t point_count() const;
};

/// Aggregates frames [center - half_window, center + half_window] (truncated at
/// the sequence ends) into the radar frame of `frames[center]`. `body_poses`
/// holds the current body-in-world pose of every frame, index-aligned.
LocalGrid build_local_grid(std::span<const RadarFrame> frames, std::span<const Pose> body_poses,
                           const Extrinsics& ext, std::size_t center, int half_window,
                           double voxel_size);

/// Per-axis unbiased sample variance of the voxel holding `p`, floored; sparse
/// or empty voxels receive the isotropic fallback with `fallback` set.
DiagCov3 estimate_point_covariance(const LocalGrid& grid, const Vec3& p,
                                   const CovarianceParams& params = {});

/// Covariances for every point of frames[center], using a local grid around it.
std::vector<DiagCov3> estimate_frame_covariances(std::span<const RadarFrame> frames,
                                                 std::span<const Pose> body_poses,
                                                 const Extrinsics& ext, std::size_t center,
                                                 int half_window, double voxel_size,
                                                 const CovarianceParams& params = {});

/// R diag(C) R^T.
Mat3 world_covariance(const Rotation& rotation, const DiagCov3& cov);

}  // namespace ramba
