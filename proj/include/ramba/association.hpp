#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ramba/core.hpp"
#include "ramba/voxelgrid.hpp"

namespace ramba {

/// One frame's representative point inside a world voxel.
struct GridEntry {
  std::size_t frame_index = 0;  ///< position in the keyframe arrays
  FrameId frame_id = 0;
  std::size_t point_index = 0;
  Vec3 point = Vec3::Zero();  ///< radar frame
  DiagCov3 covariance;
  double center_distance2 = 0.0;
};

/// World-frame voxel hash holding at most one point per frame per voxel.
struct WorldVoxelGrid {
  double voxel_size = 0.5;
  /// Entries in each voxel are sorted by frame_index.
  std::unordered_map<VoxelIndex, std::vector<GridEntry>, VoxelIndexHash> voxels;
  /// Number of occupied voxels per frame, index-aligned with the keyframes.
  std::vector<std::size_t> occupied;

  std::size_t entry_count() const;
  /// Voxel keys in ascending order.
  std::vector<VoxelIndex> sorted_keys() const;
};

/// Inserts every keyframe point at its world position under the given states.
/// When one frame has several points in a voxel, the one nearest the voxel
/// center is kept (ties: lowest point index). `covariances[f][p]` belongs to
/// `frames[f].points[p]`.
WorldVoxelGrid build_world_grid(std::span<const RadarFrame> frames,
                                std::span<const KeyframeState> states,
                                std::span<const std::vector<DiagCov3>> covariances,
                                const Extrinsics& ext, double voxel_size);

/// Shared voxels / min(occupied(a), occupied(b)); 0 when either frame is empty.
double voxel_overlap_ratio(std::size_t a, std::size_t b, const WorldVoxelGrid& grid);

/// Overlap ratios for every frame pair that shares at least one voxel, keyed by
/// (smaller index, larger index).
std::map<std::pair<std::size_t, std::size_t>, double> pairwise_overlaps(
    const WorldVoxelGrid& grid);

struct VerifiedLoop {
  FrameId query_id = 0;
  FrameId match_id = 0;
  Pose relative_pose;  ///< match body frame expressed in the query body frame
  double residual_rmse = 0.0;
  std::size_t inliers = 0;
};

/// Timestamps of a verified loop's two frames.
struct LoopWindow {
  double t_query = 0.0;
  double t_match = 0.0;
};

struct GateThresholds {
  double min_overlap = 0.1;
  double max_time_gap = 30.0;  ///< seconds, also used around loop frames
};

/// overlap > min_overlap AND (|ta - tb| < max_time_gap OR both frames lie
/// within max_time_gap of the two ends of some loop, in either role).
bool frame_pair_valid(double t_a, double t_b, double overlap, std::span<const LoopWindow> loops,
                      const GateThresholds& thresholds = {});

struct Correspondence {
  VoxelIndex voxel;
  std::size_t index_j = 0;  ///< keyframe positions; index_j < index_k
  std::size_t index_k = 0;
  FrameId frame_j = 0;
  FrameId frame_k = 0;
  Vec3 p_fj = Vec3::Zero();
  Vec3 p_fk = Vec3::Zero();
  DiagCov3 cov_fj;
  DiagCov3 cov_fk;
};

/// One correspondence per voxel per valid unordered frame pair, sorted by voxel
/// then pair. `timestamps` is index-aligned with the grid's keyframes.
std::vector<Correspondence> collect_correspondences(const WorldVoxelGrid& grid,
                                                    std::span<const double> timestamps,
                                                    std::span<const LoopWindow> loops,
                                                    const GateThresholds& thresholds = {});

}  // namespace ramba
