#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ramba/core.hpp"
#include "ramba/factors.hpp"
#include "ramba/sparse_lm.hpp"

namespace ramba {

struct AbsolutePoseEdge {
  std::size_t node = 0;
  Pose measurement;
  Mat6 information = Mat6::Identity();
};

struct RelativePoseEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  Pose measurement;  ///< to expressed in from
  Mat6 information = Mat6::Identity();
};

/// Pose graph over every frame; tangent ordering (rot, trans), rotation
/// perturbed on the left as in the keyframe states.
struct PoseGraph {
  std::vector<Pose> nodes;
  std::vector<AbsolutePoseEdge> absolute;
  std::vector<RelativePoseEdge> relative;
};

struct PoseGraphConfig {
  Mat6 keyframe_information = Mat6::Identity() * 1e6;
  Mat6 odometry_information = Mat6::Identity() * 1e4;
  int max_iterations = 100;
  double min_relative_decrease = 1e-9;
};

/// Keyframe absolute edges from the optimized keyframe poses plus relative
/// edges between consecutive frames from `odometry` (odometry[i] relates frames
/// i and i + 1). Non-keyframe nodes are initialized by chaining odometry from
/// the nearest keyframe. `odometry_information`, when non-empty, overrides the
/// default per edge. Throws kData when odometry does not cover every pair.
PoseGraph build_pose_graph(std::size_t frame_count, std::span<const std::size_t> keyframe_indices,
                           std::span<const Pose> keyframe_poses, std::span<const Pose> odometry,
                           const PoseGraphConfig& config = {},
                           std::span<const Mat6> odometry_information = {});

/// local_coordinates(z^-1 * x).
FactorBlock absolute_pose_factor(const Pose& x, const Pose& z, const Mat6& information);
/// local_coordinates(z^-1 * between(x_i, x_j)).
FactorBlock relative_pose_factor(const Pose& x_i, const Pose& x_j, const Pose& z,
                                 const Mat6& information);

struct PoseGraphResult {
  std::vector<Pose> poses;
  LmSummary summary;
};

/// Levenberg-Marquardt on all nodes. Throws kStructural when the graph is
/// disconnected or has no absolute edge.
PoseGraphResult solve_pose_graph(const PoseGraph& graph, const PoseGraphConfig& config = {});

/// Sum of squared whitened edge residuals.
double pose_graph_objective(const PoseGraph& graph, std::span<const Pose> poses);

}  // namespace ramba
