#include "ramba/eval.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <unordered_map>

#include "ramba/error.hpp"
#include "ramba/voxelgrid.hpp"

namespace ramba {

std::vector<std::pair<std::size_t, std::size_t>> associate_by_time(std::span<const StampedPose> est,
                                                                   std::span<const StampedPose> gt,
                                                                   double max_dt) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (gt.empty()) return out;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = est[i].timestamp;
    const auto it = std::lower_bound(gt.begin(), gt.end(), t,
                                     [](const StampedPose& p, double v) { return p.timestamp < v; });
    std::size_t best = gt.size();
    double best_dt = std::numeric_limits<double>::infinity();
    if (it != gt.end()) {
      best = static_cast<std::size_t>(it - gt.begin());
      best_dt = std::abs(it->timestamp - t);
    }
    if (it != gt.begin()) {
      const auto prev = it - 1;
      if (std::abs(prev->timestamp - t) < best_dt) {
        best = static_cast<std::size_t>(prev - gt.begin());
        best_dt = std::abs(prev->timestamp - t);
      }
    }
    if (best < gt.size() && best_dt <= max_dt) out.emplace_back(i, best);
  }
  return out;
}

Pose align_rigid(std::span<const Vec3> src, std::span<const Vec3> dst) {
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Matrix3Xd s(3, n);
  Eigen::Matrix3Xd d(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.col(i) = src[static_cast<std::size_t>(i)];
    d.col(i) = dst[static_cast<std::size_t>(i)];
  }
  const Eigen::Matrix4d T = Eigen::umeyama(s, d, false);
  return {Rotation(Mat3(T.block<3, 3>(0, 0))), T.block<3, 1>(0, 3)};
}

AteResult ate_rmse(std::span<const StampedPose> est, std::span<const StampedPose> gt,
                   double max_dt) {
  const auto pairs = associate_by_time(est, gt, max_dt);
  if (pairs.size() < 2) {
    fail(ErrorCategory::kData,
         "ATE needs at least 2 time-matched poses, found " + std::to_string(pairs.size()));
  }
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (const auto& [i, j] : pairs) {
    src.push_back(est[i].pose.translation);
    dst.push_back(gt[j].pose.translation);
  }
  AteResult r;
  r.alignment = align_rigid(src, dst);
  r.matches = pairs.size();
  double sum = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    sum += (r.alignment * src[k] - dst[k]).squaredNorm();
  }
  r.rmse = std::sqrt(sum / static_cast<double>(src.size()));
  return r;
}

RpeResult rpe_rot_rmse(std::span<const StampedPose> est, std::span<const StampedPose> gt,
                       std::span<const double> distances, double max_dt) {
  const auto pairs = associate_by_time(est, gt, max_dt);
  std::vector<double> arc(pairs.size(), 0.0);
  for (std::size_t k = 1; k < pairs.size(); ++k) {
    arc[k] = arc[k - 1] + (gt[pairs[k].second].pose.translation -
                           gt[pairs[k - 1].second].pose.translation)
                              .norm();
  }

  constexpr double kRadToDeg = 180.0 / std::numbers::pi;
  RpeResult out;
  double pooled = 0.0;
  std::size_t pooled_n = 0;
  for (const double d : distances) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto it = std::partition_point(arc.begin() + static_cast<long>(i), arc.end(),
                                           [&](double s) { return !(s - arc[i] > d); });
      if (it == arc.end()) break;
      const auto j = static_cast<std::size_t>(it - arc.begin());
      const Rotation rel_est =
          est[pairs[i].first].pose.rotation.inverse() * est[pairs[j].first].pose.rotation;
      const Rotation rel_gt =
          gt[pairs[i].second].pose.rotation.inverse() * gt[pairs[j].second].pose.rotation;
      const double e = (rel_est.inverse() * rel_gt).angle() * kRadToDeg;
      sum += e * e;
      ++n;
    }
    out.pair_count[d] = n;
    if (n > 0) {
      out.rmse_deg[d] = std::sqrt(sum / static_cast<double>(n));
      pooled += sum;
      pooled_n += n;
    }
  }
  out.empty = pooled_n == 0;
  out.combined_deg = pooled_n > 0 ? std::sqrt(pooled / static_cast<double>(pooled_n)) : 0.0;
  return out;
}

std::vector<Vec3> voxel_downsample(std::span<const Vec3> cloud, double voxel) {
  if (!(voxel > 0.0)) return {cloud.begin(), cloud.end()};
  std::unordered_map<VoxelIndex, std::pair<Vec3, std::size_t>, VoxelIndexHash> cells;
  for (const Vec3& p : cloud) {
    auto& [sum, n] = cells.try_emplace(voxel_index(p, voxel), Vec3::Zero(), 0).first->second;
    sum += p;
    ++n;
  }
  std::vector<std::pair<VoxelIndex, Vec3>> sorted;
  sorted.reserve(cells.size());
  for (const auto& [key, acc] : cells) {
    sorted.emplace_back(key, acc.first / static_cast<double>(acc.second));
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Vec3> out;
  out.reserve(sorted.size());
  for (const auto& [_, p] : sorted) out.push_back(p);
  return out;
}

namespace {

// Mean distance from each query point to its nearest target point, clipped.
double directed_mean_distance(std::span<const Vec3> query, std::span<const Vec3> target,
                              double truncation) {
  double sum = 0.0;
  if (!(truncation > 0.0)) {
    for (const Vec3& q : query) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& t : target) best = std::min(best, (q - t).squaredNorm());
      sum += std::sqrt(best);
    }
    return sum / static_cast<double>(query.size());
  }

  // Cell size equals the truncation radius, so the 27-cell neighborhood holds
  // every point closer than the truncation.
  std::unordered_map<VoxelIndex, std::vector<std::size_t>, VoxelIndexHash> index;
  for (std::size_t i = 0; i < target.size(); ++i) {
    index[voxel_index(target[i], truncation)].push_back(i);
  }
  const double trunc2 = truncation * truncation;
  for (const Vec3& q : query) {
    const VoxelIndex c = voxel_index(q, truncation);
    double best = trunc2;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = index.find({c.i + dx, c.j + dy, c.k + dz});
          if (it == index.end()) continue;
          for (std::size_t t : it->second) best = std::min(best, (q - target[t]).squaredNorm());
        }
      }
    }
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(query.size());
}

}  // namespace

double chamfer_l1(std::span<const Vec3> a, std::span<const Vec3> b, const ChamferParams& params) {
  if (a.empty() || b.empty()) fail(ErrorCategory::kData, "chamfer_l1: empty point cloud");
  const std::vector<Vec3> da = voxel_downsample(a, params.downsample_voxel);
  const std::vector<Vec3> db = voxel_downsample(b, params.downsample_voxel);
  const double ab = directed_mean_distance(da, db, params.truncation);
  const double ba = directed_mean_distance(db, da, params.truncation);
  return 100.0 * 0.5 * (ab + ba);
}

}  // namespace ramba
