#include "ramba/association.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ramba/error.hpp"

namespace ramba {

std::size_t WorldVoxelGrid::entry_count() const {
  std::size_t n = 0;
  for (const auto& [_, entries] : voxels) n += entries.size();
  return n;
}

std::vector<VoxelIndex> WorldVoxelGrid::sorted_keys() const {
  std::vector<VoxelIndex> keys;
  keys.reserve(voxels.size());
  for (const auto& [key, _] : voxels) keys.push_back(key);
  std::sort(keys.begin(), keys.end());
  return keys;
}

WorldVoxelGrid build_world_grid(std::span<const RadarFrame> frames,
                                std::span<const KeyframeState> states,
                                std::span<const std::vector<DiagCov3>> covariances,
                                const Extrinsics& ext, double voxel_size) {
  if (frames.size() != states.size() || frames.size() != covariances.size()) {
    fail(ErrorCategory::kPrecondition, "build_world_grid: frames/states/covariances size mismatch");
  }
  WorldVoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.occupied.assign(frames.size(), 0);

  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& pts = frames[f].points;
    if (covariances[f].size() != pts.size()) {
      fail(ErrorCategory::kPrecondition,
           "build_world_grid: missing covariances for frame " + std::to_string(frames[f].id));
    }
    const Pose world_from_radar = states[f].pose * ext.radar_in_body;
    for (std::size_t p = 0; p < pts.size(); ++p) {
      const Vec3 w = world_from_radar * pts[p];
      const VoxelIndex key = voxel_index(w, voxel_size);
      const double d2 = (w - voxel_center(key, voxel_size)).squaredNorm();
      auto& entries = grid.voxels[key];
      // Frames are inserted in order, so this frame's entry, if any, is last.
      if (!entries.empty() && entries.back().frame_index == f) {
        GridEntry& e = entries.back();
        if (d2 < e.center_distance2) {
          e.point_index = p;
          e.point = pts[p];
          e.covariance = covariances[f][p];
          e.center_distance2 = d2;
        }
        continue;
      }
      entries.push_back({f, frames[f].id, p, pts[p], covariances[f][p], d2});
      ++grid.occupied[f];
    }
  }
  return grid;
}

namespace {

std::size_t shared_voxels(std::size_t a, std::size_t b, const WorldVoxelGrid& grid) {
  std::size_t shared = 0;
  for (const auto& [_, entries] : grid.voxels) {
    bool has_a = false;
    bool has_b = false;
    for (const GridEntry& e : entries) {
      has_a = has_a || e.frame_index == a;
      has_b = has_b || e.frame_index == b;
    }
    if (has_a && has_b) ++shared;
  }
  return shared;
}

}  // namespace

double voxel_overlap_ratio(std::size_t a, std::size_t b, const WorldVoxelGrid& grid) {
  if (a >= grid.occupied.size() || b >= grid.occupied.size()) return 0.0;
  const std::size_t denom = std::min(grid.occupied[a], grid.occupied[b]);
  if (denom == 0) return 0.0;
  if (a == b) return 1.0;
  return static_cast<double>(shared_voxels(a, b, grid)) / static_cast<double>(denom);
}

std::map<std::pair<std::size_t, std::size_t>, double> pairwise_overlaps(
    const WorldVoxelGrid& grid) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> shared;
  for (const auto& [_, entries] : grid.voxels) {
    for (std::size_t x = 0; x < entries.size(); ++x) {
      for (std::size_t y = x + 1; y < entries.size(); ++y) {
        ++shared[{entries[x].frame_index, entries[y].frame_index}];
      }
    }
  }
  std::map<std::pair<std::size_t, std::size_t>, double> out;
  for (const auto& [pair, count] : shared) {
    const std::size_t denom = std::min(grid.occupied[pair.first], grid.occupied[pair.second]);
    out[pair] = denom == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(denom);
  }
  return out;
}

bool frame_pair_valid(double t_a, double t_b, double overlap, std::span<const LoopWindow> loops,
                      const GateThresholds& thresholds) {
  if (!(overlap > thresholds.min_overlap)) return false;
  const double tau = thresholds.max_time_gap;
  if (std::abs(t_a - t_b) < tau) return true;
  for (const LoopWindow& loop : loops) {
    if (std::abs(t_a - loop.t_query) < tau && std::abs(t_b - loop.t_match) < tau) return true;
    if (std::abs(t_a - loop.t_match) < tau && std::abs(t_b - loop.t_query) < tau) return true;
  }
  return false;
}

std::vector<Correspondence> collect_correspondences(const WorldVoxelGrid& grid,
                                                    std::span<const double> timestamps,
                                                    std::span<const LoopWindow> loops,
                                                    const GateThresholds& thresholds) {
  if (timestamps.size() != grid.occupied.size()) {
    fail(ErrorCategory::kPrecondition, "collect_correspondences: timestamp count mismatch");
  }
  const auto overlaps = pairwise_overlaps(grid);
  std::map<std::pair<std::size_t, std::size_t>, bool> valid;
  for (const auto& [pair, overlap] : overlaps) {
    valid[pair] =
        frame_pair_valid(timestamps[pair.first], timestamps[pair.second], overlap, loops, thresholds);
  }

  std::vector<Correspondence> out;
  for (const VoxelIndex& key : grid.sorted_keys()) {
    const auto& entries = grid.voxels.at(key);
    for (std::size_t x = 0; x < entries.size(); ++x) {
      for (std::size_t y = x + 1; y < entries.size(); ++y) {
        const GridEntry& a = entries[x];
        const GridEntry& b = entries[y];
        if (!valid.at({a.frame_index, b.frame_index})) continue;
        out.push_back({key, a.frame_index, b.frame_index, a.frame_id, b.frame_id, a.point, b.point,
                       a.covariance, b.covariance});
      }
    }
  }
  return out;
}

}  // namespace ramba
