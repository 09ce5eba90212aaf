#include "ramba/pgo.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <numeric>
#include <string>

#include "ramba/error.hpp"

namespace ramba {

using so3::hat;

namespace {

Eigen::MatrixXd sqrt_information(const Mat6& information) {
  Eigen::LLT<Mat6> llt(0.5 * (information + information.transpose()));
  if (llt.info() != Eigen::Success) {
    fail(ErrorCategory::kNumerical, "pose-graph information is not positive definite");
  }
  return llt.matrixU();
}

struct PoseGraphLmAdapter {
  const PoseGraph& graph;

  std::vector<FactorBlock> linearize(const std::vector<Pose>& at) const {
    std::vector<FactorBlock> out;
    out.reserve(graph.absolute.size() + graph.relative.size());
    for (const AbsolutePoseEdge& e : graph.absolute) {
      FactorBlock f = absolute_pose_factor(at[e.node], e.measurement, e.information);
      f.states = {e.node};
      out.push_back(std::move(f));
    }
    for (const RelativePoseEdge& e : graph.relative) {
      FactorBlock f = relative_pose_factor(at[e.from], at[e.to], e.measurement, e.information);
      f.states = {e.from, e.to};
      out.push_back(std::move(f));
    }
    return out;
  }
  double objective(const std::vector<Pose>& at) const { return pose_graph_objective(graph, at); }
  Pose retract(const Pose& p, const Vec6& d) const {
    return {Rotation::exp(d.head<3>()) * p.rotation, p.translation + d.tail<3>()};
  }
};

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

FactorBlock absolute_pose_factor(const Pose& x, const Pose& z, const Mat6& information) {
  const Pose err = z.inverse() * x;
  const Vec3 r_rot = err.rotation.log();
  FactorBlock f;
  f.residual.resize(6);
  f.residual << r_rot, err.translation;
  f.states = {0};
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(6, 6);
  j.block<3, 3>(0, 0) = so3::right_jacobian_inverse(r_rot) * x.rotation.matrix().transpose();
  j.block<3, 3>(3, 3) = z.rotation.matrix().transpose();
  f.jacobians = {std::move(j)};
  f.sqrt_information = sqrt_information(information);
  return f;
}

FactorBlock relative_pose_factor(const Pose& x_i, const Pose& x_j, const Pose& z,
                                 const Mat6& information) {
  const Pose err = z.inverse() * between(x_i, x_j);
  const Vec3 r_rot = err.rotation.log();
  FactorBlock f;
  f.residual.resize(6);
  f.residual << r_rot, err.translation;
  f.states = {0, 1};

  const Mat3 jr_inv_rj = so3::right_jacobian_inverse(r_rot) * x_j.rotation.matrix().transpose();
  const Mat3 rz_ri = z.rotation.matrix().transpose() * x_i.rotation.matrix().transpose();
  Eigen::MatrixXd ji = Eigen::MatrixXd::Zero(6, 6);
  Eigen::MatrixXd jj = Eigen::MatrixXd::Zero(6, 6);
  ji.block<3, 3>(0, 0) = -jr_inv_rj;
  jj.block<3, 3>(0, 0) = jr_inv_rj;
  ji.block<3, 3>(3, 0) = rz_ri * hat(x_j.translation - x_i.translation);
  ji.block<3, 3>(3, 3) = -rz_ri;
  jj.block<3, 3>(3, 3) = rz_ri;
  f.jacobians = {std::move(ji), std::move(jj)};
  f.sqrt_information = sqrt_information(information);
  return f;
}

PoseGraph build_pose_graph(std::size_t frame_count, std::span<const std::size_t> keyframe_indices,
                           std::span<const Pose> keyframe_poses, std::span<const Pose> odometry,
                           const PoseGraphConfig& config,
                           std::span<const Mat6> odometry_information) {
  if (keyframe_indices.size() != keyframe_poses.size()) {
    fail(ErrorCategory::kPrecondition, "build_pose_graph: keyframe index/pose count mismatch");
  }
  if (frame_count > 0 && odometry.size() + 1 < frame_count) {
    fail(ErrorCategory::kData, "build_pose_graph: missing relative pose between frames " +
                                   std::to_string(odometry.size()) + " and " +
                                   std::to_string(odometry.size() + 1));
  }
  if (!odometry_information.empty() && odometry_information.size() + 1 < frame_count) {
    fail(ErrorCategory::kData, "build_pose_graph: odometry information count mismatch");
  }

  PoseGraph g;
  g.nodes.assign(frame_count, Pose::identity());
  std::vector<bool> anchored(frame_count, false);
  for (std::size_t k = 0; k < keyframe_indices.size(); ++k) {
    const std::size_t idx = keyframe_indices[k];
    if (idx >= frame_count) {
      fail(ErrorCategory::kPrecondition, "build_pose_graph: keyframe index out of range");
    }
    if (anchored[idx]) {
      fail(ErrorCategory::kPrecondition, "build_pose_graph: duplicate keyframe index");
    }
    anchored[idx] = true;
    g.nodes[idx] = keyframe_poses[k];
    g.absolute.push_back({idx, keyframe_poses[k], config.keyframe_information});
  }

  // Forward chaining from the most recent keyframe, then backward for any
  // frames preceding the first keyframe.
  std::optional<std::size_t> last_anchor;
  for (std::size_t i = 0; i < frame_count; ++i) {
    if (anchored[i]) {
      last_anchor = i;
    } else if (last_anchor) {
      g.nodes[i] = g.nodes[i - 1] * odometry[i - 1];
    }
  }
  if (!keyframe_indices.empty()) {
    const std::size_t first = *std::min_element(keyframe_indices.begin(), keyframe_indices.end());
    for (std::size_t i = first; i-- > 0;) g.nodes[i] = g.nodes[i + 1] * odometry[i].inverse();
  }

  for (std::size_t i = 0; i + 1 < frame_count; ++i) {
    g.relative.push_back({i, i + 1, odometry[i],
                          odometry_information.empty() ? config.odometry_information
                                                       : odometry_information[i]});
  }
  return g;
}

double pose_graph_objective(const PoseGraph& graph, std::span<const Pose> poses) {
  double total = 0.0;
  for (const AbsolutePoseEdge& e : graph.absolute) {
    total += absolute_pose_factor(poses[e.node], e.measurement, e.information).cost();
  }
  for (const RelativePoseEdge& e : graph.relative) {
    total += relative_pose_factor(poses[e.from], poses[e.to], e.measurement, e.information).cost();
  }
  return total;
}

PoseGraphResult solve_pose_graph(const PoseGraph& graph, const PoseGraphConfig& config) {
  const std::size_t n = graph.nodes.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (const RelativePoseEdge& e : graph.relative) {
    if (e.from >= n || e.to >= n) fail(ErrorCategory::kStructural, "edge references missing node");
    parent[find_root(parent, e.from)] = find_root(parent, e.to);
  }
  std::size_t components = 0;
  for (std::size_t i = 0; i < n; ++i) components += find_root(parent, i) == i ? 1 : 0;
  if (n > 0 && components != 1) {
    fail(ErrorCategory::kStructural,
         "pose graph is disconnected (" + std::to_string(components) + " components)");
  }
  if (n > 0 && graph.absolute.empty()) {
    fail(ErrorCategory::kStructural, "pose graph has no absolute constraint");
  }

  LmParams params;
  params.max_iterations = config.max_iterations;
  params.min_relative_decrease = config.min_relative_decrease;
  params.min_step_norm = 1e-12;

  PoseGraphResult result;
  result.poses = graph.nodes;
  PoseGraphLmAdapter adapter{graph};
  result.summary = solve_sparse_lm<6>(adapter, result.poses, std::vector<bool>(n, false), params);
  return result;
}

}  // namespace ramba
