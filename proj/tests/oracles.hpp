#pragma once

// Naive reference implementations, written independently of the library code
// paths they check.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "ramba/association.hpp"
#include "ramba/core.hpp"
#include "ramba/eval.hpp"
#include "ramba/voxelgrid.hpp"

namespace ramba::oracle {

using Key = std::tuple<long long, long long, long long>;

inline Key key_of(const Vec3& w, double voxel) {
  return {static_cast<long long>(std::floor(w.x() / voxel)),
          static_cast<long long>(std::floor(w.y() / voxel)),
          static_cast<long long>(std::floor(w.z() / voxel))};
}

/// overlap > tau_o AND (|ta - tb| < tau_t OR loop-adjacent in either role).
inline bool pair_admitted(double ta, double tb, double overlap,
                          const std::vector<std::pair<double, double>>& loops, double tau_o = 0.1,
                          double tau_t = 30.0) {
  if (overlap <= tau_o) return false;
  if (std::fabs(ta - tb) < tau_t) return true;
  for (const auto& [tq, tm] : loops) {
    const bool forward = std::fabs(ta - tq) < tau_t && std::fabs(tb - tm) < tau_t;
    const bool swapped = std::fabs(ta - tm) < tau_t && std::fabs(tb - tq) < tau_t;
    if (forward || swapped) return true;
  }
  return false;
}

/// Per frame and voxel, the point index nearest the voxel center (lowest index
/// on ties).
inline std::vector<std::map<Key, std::size_t>> representatives(
    const std::vector<RadarFrame>& frames, const std::vector<KeyframeState>& states,
    const Extrinsics& ext, double voxel) {
  std::vector<std::map<Key, std::size_t>> out(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    std::map<Key, double> best;
    for (std::size_t p = 0; p < frames[f].points.size(); ++p) {
      const Vec3 w = transform_radar_point(states[f], ext, frames[f].points[p]);
      const Key k = key_of(w, voxel);
      const Vec3 center((std::get<0>(k) + 0.5) * voxel, (std::get<1>(k) + 0.5) * voxel,
                        (std::get<2>(k) + 0.5) * voxel);
      const double d = (w - center).squaredNorm();
      auto it = best.find(k);
      if (it == best.end() || d < it->second) {
        best[k] = d;
        out[f][k] = p;
      }
    }
  }
  return out;
}

/// Admitted (voxel, frame a, frame b) triples with a < b.
inline std::set<std::tuple<Key, std::size_t, std::size_t>> admitted_pairs(
    const std::vector<std::map<Key, std::size_t>>& reps, const std::vector<double>& timestamps,
    const std::vector<std::pair<double, double>>& loops, double tau_o = 0.1, double tau_t = 30.0) {
  std::set<std::tuple<Key, std::size_t, std::size_t>> out;
  for (std::size_t a = 0; a < reps.size(); ++a) {
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      std::vector<Key> shared;
      for (const auto& [k, _] : reps[a]) {
        if (reps[b].count(k)) shared.push_back(k);
      }
      const std::size_t denom = std::min(reps[a].size(), reps[b].size());
      const double overlap = denom == 0 ? 0.0 : double(shared.size()) / double(denom);
      if (!pair_admitted(timestamps[a], timestamps[b], overlap, loops, tau_o, tau_t)) continue;
      for (const Key& k : shared) out.insert({k, a, b});
    }
  }
  return out;
}

/// Sum over voxels and admitted pairs of r^T (C_a + C_b)^-1 r, r = p_a - p_b in
/// the world frame and C = R_WR diag(c) R_WR^T.
inline double geometric_objective(const std::vector<RadarFrame>& frames,
                                  const std::vector<KeyframeState>& states,
                                  const std::vector<std::vector<DiagCov3>>& covs,
                                  const Extrinsics& ext, double voxel,
                                  const std::vector<double>& timestamps,
                                  const std::vector<std::pair<double, double>>& loops) {
  const auto reps = representatives(frames, states, ext, voxel);
  double total = 0.0;
  for (const auto& [k, a, b] : admitted_pairs(reps, timestamps, loops)) {
    const std::size_t pa = reps[a].at(k);
    const std::size_t pb = reps[b].at(k);
    const Vec3 r = transform_radar_point(states[a], ext, frames[a].points[pa]) -
                   transform_radar_point(states[b], ext, frames[b].points[pb]);
    const Mat3 ra = states[a].pose.rotation.matrix() * ext.radar_in_body.rotation.matrix();
    const Mat3 rb = states[b].pose.rotation.matrix() * ext.radar_in_body.rotation.matrix();
    const Mat3 ca = ra * Mat3(covs[a][pa].variances.asDiagonal()) * ra.transpose();
    const Mat3 cb = rb * Mat3(covs[b][pb].variances.asDiagonal()) * rb.transpose();
    total += r.dot((ca + cb).inverse() * r);
  }
  return total;
}

/// Kabsch via SVD on exactly-matching timestamps, then translation RMSE.
inline double ate(const StampedTrajectory& est, const StampedTrajectory& gt) {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  for (const auto& e : est) {
    for (const auto& g : gt) {
      if (e.timestamp == g.timestamp) {
        src.push_back(e.pose.translation);
        dst.push_back(g.pose.translation);
      }
    }
  }
  Vec3 ms = Vec3::Zero();
  Vec3 md = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    ms += src[i];
    md += dst[i];
  }
  ms /= double(src.size());
  md /= double(src.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) h += (src[i] - ms) * (dst[i] - md).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  const Vec3 t = md - r * ms;
  double sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sum += (r * src[i] + t - dst[i]).squaredNorm();
  return std::sqrt(sum / double(src.size()));
}

inline double angle_deg(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

/// Per-distance rotation RPE (deg) with linear scans, identical timestamps.
/// Distances with no pairs are absent.
inline std::map<double, double> rpe(const StampedTrajectory& est, const StampedTrajectory& gt,
                                    const std::vector<double>& distances) {
  std::map<double, double> out;
  for (double d : distances) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      double arc = 0.0;
      for (std::size_t j = i + 1; j < gt.size(); ++j) {
        arc += (gt[j].pose.translation - gt[j - 1].pose.translation).norm();
        if (arc > d) {
          const Mat3 re = est[i].pose.rotation.matrix().transpose() * est[j].pose.rotation.matrix();
          const Mat3 rg = gt[i].pose.rotation.matrix().transpose() * gt[j].pose.rotation.matrix();
          const double e = angle_deg(re.transpose() * rg);
          sum += e * e;
          ++n;
          break;
        }
      }
    }
    if (n > 0) out[d] = std::sqrt(sum / n);
  }
  return out;
}

/// Chamfer-L1 (cm) without downsampling: brute-force nearest neighbours,
/// distances clipped at `truncation`.
inline double chamfer_cm(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                         double truncation) {
  auto directed = [&](const std::vector<Vec3>& q, const std::vector<Vec3>& t) {
    double sum = 0.0;
    for (const Vec3& x : q) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& y : t) best = std::min(best, (x - y).norm());
      sum += std::min(best, truncation);
    }
    return sum / double(q.size());
  };
  return 100.0 * 0.5 * (directed(a, b) + directed(b, a));
}

}  // namespace ramba::oracle
