#include "ramba/voxelgrid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ramba/error.hpp"

namespace ramba {

VoxelIndex voxel_index(const Vec3& p, double voxel_size) {
  if (!(voxel_size > 0.0)) {
    fail(ErrorCategory::kInvalidArgument, "voxel_size must be positive");
  }
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

Vec3 voxel_center(const VoxelIndex& v, double voxel_size) {
  return Vec3(static_cast<double>(v.i) + 0.5, static_cast<double>(v.j) + 0.5,
              static_cast<double>(v.k) + 0.5) *
         voxel_size;
}

std::size_t LocalGrid::point_count() const {
  std::size_t n = 0;
  for (const auto& [_, pts] : cells) n += pts.size();
  return n;
}

LocalGrid build_local_grid(std::span<const RadarFrame> frames, std::span<const Pose> body_poses,
                           const Extrinsics& ext, std::size_t center, int half_window,
                           double voxel_size) {
  if (center >= frames.size()) {
    fail(ErrorCategory::kPrecondition,
         "build_local_grid: center index " + std::to_string(center) + " out of range");
  }
  if (half_window < 0) fail(ErrorCategory::kInvalidArgument, "half_window must be >= 0");
  if (!(voxel_size > 0.0)) fail(ErrorCategory::kInvalidArgument, "voxel_size must be positive");

  LocalGrid grid;
  grid.voxel_size = voxel_size;
  grid.center = center;
  const auto hw = static_cast<std::size_t>(half_window);
  grid.first = center >= hw ? center - hw : 0;
  grid.last = std::min(frames.size() - 1, center + hw);
  if (body_poses.size() <= grid.last) {
    fail(ErrorCategory::kPrecondition, "build_local_grid: missing pose for frame index " +
                                           std::to_string(body_poses.size()));
  }

  const Pose world_from_center_radar = body_poses[center] * ext.radar_in_body;
  const Pose center_radar_from_world = world_from_center_radar.inverse();
  for (std::size_t f = grid.first; f <= grid.last; ++f) {
    const Pose center_from_f =
        f == center ? Pose::identity()
                    : center_radar_from_world * body_poses[f] * ext.radar_in_body;
    for (const Vec3& p : frames[f].points) {
      const Vec3 q = f == center ? p : Vec3(center_from_f * p);
      grid.cells[voxel_index(q, voxel_size)].push_back(q);
    }
  }
  return grid;
}

DiagCov3 estimate_point_covariance(const LocalGrid& grid, const Vec3& p,
                                   const CovarianceParams& params) {
  const double fallback = params.fallback_variance > 0.0
                              ? params.fallback_variance
                              : grid.voxel_size * grid.voxel_size / 12.0;
  DiagCov3 fb{Vec3::Constant(std::max(fallback, params.variance_floor)), true};

  const auto it = grid.cells.find(voxel_index(p, grid.voxel_size));
  if (it == grid.cells.end()) return fb;
  const int min_points = std::max(params.min_points, 2);
  if (static_cast<int>(it->second.size()) < min_points) return fb;

  // Sorted copy makes the estimate independent of insertion order bit-for-bit.
  std::vector<Vec3> pts = it->second;
  std::sort(pts.begin(), pts.end(), [](const Vec3& a, const Vec3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });
  const double n = static_cast<double>(pts.size());
  Vec3 mean = Vec3::Zero();
  for (const Vec3& q : pts) mean += q;
  mean /= n;
  Vec3 var = Vec3::Zero();
  for (const Vec3& q : pts) var += (q - mean).cwiseAbs2();
  var /= (n - 1.0);
  return {var.cwiseMax(params.variance_floor), false};
}

std::vector<DiagCov3> estimate_frame_covariances(std::span<const RadarFrame> frames,
                                                 std::span<const Pose> body_poses,
                                                 const Extrinsics& ext, std::size_t center,
                                                 int half_window, double voxel_size,
                                                 const CovarianceParams& params) {
  const LocalGrid grid =
      build_local_grid(frames, body_poses, ext, center, half_window, voxel_size);
  std::vector<DiagCov3> covs;
  covs.reserve(frames[center].points.size());
  for (const Vec3& p : frames[center].points) {
    covs.push_back(estimate_point_covariance(grid, p, params));
  }
  return covs;
}

Mat3 world_covariance(const Rotation& rotation, const DiagCov3& cov) {
  const Mat3 r = rotation.matrix();
  Mat3 c = r * cov.variances.asDiagonal() * r.transpose();
  return 0.5 * (c + c.transpose());
}

}  // namespace ramba
