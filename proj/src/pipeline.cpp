#include "ramba/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>

#include "ramba/error.hpp"
#include "ramba/factors.hpp"

namespace ramba {

namespace {

template <class F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.category(), std::string(stage) + ": " + e.what());
  }
}

std::size_t frame_index(std::span<const RadarFrame> frames, FrameId id) {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].id == id) return i;
  }
  fail(ErrorCategory::kData, "unknown frame id " + std::to_string(id));
}

}  // namespace

std::vector<KeyframeDecision> select_keyframes(std::span<const RadarFrame> frames,
                                               std::span<const Pose> body_poses,
                                               const Extrinsics& ext, double voxel_size,
                                               double threshold, int window) {
  if (frames.size() != body_poses.size()) {
    fail(ErrorCategory::kPrecondition, "select_keyframes: one pose per frame required");
  }
  if (window < 1) fail(ErrorCategory::kInvalidArgument, "select_keyframes: window must be >= 1");

  std::deque<std::vector<VoxelIndex>> recent;
  std::unordered_map<VoxelIndex, int, VoxelIndexHash> occupancy;
  std::vector<KeyframeDecision> out;
  out.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Pose world_from_radar = body_poses[f] * ext.radar_in_body;
    std::vector<VoxelIndex> keys;
    keys.reserve(frames[f].points.size());
    std::size_t hits = 0;
    for (const Vec3& p : frames[f].points) {
      const VoxelIndex key = voxel_index(world_from_radar * p, voxel_size);
      if (occupancy.contains(key)) ++hits;
      keys.push_back(key);
    }
    KeyframeDecision d;
    d.frame_id = frames[f].id;
    d.overlap = keys.empty() ? 0.0
                             : static_cast<double>(hits) / static_cast<double>(keys.size());
    d.is_keyframe = f == 0 || d.overlap < threshold;
    out.push_back(d);
    if (!d.is_keyframe) continue;

    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    for (const VoxelIndex& k : keys) ++occupancy[k];
    recent.push_back(std::move(keys));
    if (recent.size() > static_cast<std::size_t>(window)) {
      for (const VoxelIndex& k : recent.front()) {
        if (--occupancy[k] == 0) occupancy.erase(k);
      }
      recent.pop_front();
    }
  }
  return out;
}

RegistrationResult register_pair(const RadarFrame& reference,
                                 std::span<const std::vector<DiagCov3>> reference_covariances,
                                 const RadarFrame& moving,
                                 std::span<const std::vector<DiagCov3>> moving_covariances,
                                 const Extrinsics& ext, const Pose& initial,
                                 const RegistrationConfig& config) {
  const std::size_t levels = config.scales.size();
  if (levels == 0 || reference_covariances.size() != levels ||
      moving_covariances.size() != levels) {
    fail(ErrorCategory::kPrecondition, "register_pair: one covariance set per level required");
  }
  for (std::size_t l = 0; l < levels; ++l) {
    if (reference_covariances[l].size() != reference.points.size() ||
        moving_covariances[l].size() != moving.points.size()) {
      fail(ErrorCategory::kPrecondition, "register_pair: covariances not aligned with points");
    }
  }

  const std::vector<RadarFrame> clouds{reference, moving};
  Problem problem;
  problem.ext = ext;
  problem.states.resize(2);
  problem.states[1].pose = initial;
  problem.states[0].frame_id = reference.id;
  problem.states[1].frame_id = moving.id;
  problem.fixed = {true, false};
  problem.priors.enabled = false;

  // Both clouds are one registration pair; admit every shared voxel.
  const GateThresholds admit_all{-1.0, std::numeric_limits<double>::infinity()};
  const std::vector<double> timestamps{0.0, 0.0};

  RegistrationResult result;
  std::vector<std::vector<DiagCov3>> covs(2);
  for (std::size_t l = 0; l < levels; ++l) {
    const double voxel = config.voxel_size * config.scales[l];
    problem.huber_delta = l + 1 < levels ? config.coarse_huber_delta : config.huber_delta;
    covs[0] = reference_covariances[l];
    covs[1] = moving_covariances[l];
    result.converged = false;
    for (int round = 0; round < config.rounds_per_level; ++round) {
      const WorldVoxelGrid grid = build_world_grid(clouds, problem.states, covs, ext, voxel);
      problem.correspondences = collect_correspondences(grid, timestamps, {}, admit_all);
      result.correspondences = problem.correspondences.size();
      if (problem.correspondences.size() < config.min_correspondences) {
        result.relative = problem.states[1].pose;
        result.reason = "too few correspondences (" +
                        std::to_string(problem.correspondences.size()) + ") at voxel size " +
                        std::to_string(voxel);
        return result;
      }
      const Pose before = problem.states[1].pose;
      solve_inner(problem, config.lm);
      const PoseError moved = pose_error(before, problem.states[1].pose);
      if (std::max(moved.rotation, moved.translation) < config.convergence_tolerance) {
        result.converged = true;
        break;
      }
    }
  }

  result.relative = problem.states[1].pose;
  const double voxel = config.voxel_size * config.scales.back();
  const WorldVoxelGrid grid = build_world_grid(clouds, problem.states, covs, ext, voxel);
  const auto final_corr = collect_correspondences(grid, timestamps, {}, admit_all);
  result.correspondences = final_corr.size();
  double sum = 0.0;
  for (const Correspondence& c : final_corr) {
    const double r2 =
        geometric_factor(c, problem.states[c.index_j], problem.states[c.index_k], ext)
            .whitened()
            .squaredNorm();
    sum += r2;
    if (r2 <= config.inlier_chi2) ++result.inliers;
  }
  result.residual_rmse =
      final_corr.empty() ? std::numeric_limits<double>::infinity()
                         : std::sqrt(sum / (3.0 * static_cast<double>(final_corr.size())));

  if (!result.converged) {
    result.reason = "did not converge";
  } else if (!(result.residual_rmse < config.tau_verify)) {
    result.reason = "residual " + std::to_string(result.residual_rmse) + " above threshold";
  } else if (result.inliers < config.min_inliers) {
    result.reason = "only " + std::to_string(result.inliers) + " inliers";
  } else {
    result.accepted = true;
  }
  return result;
}

RadarFrame build_submap(std::span<const RadarFrame> frames, std::span<const Pose> body_poses,
                        const Extrinsics& ext, std::size_t center, int half_window) {
  if (center >= frames.size() || frames.size() != body_poses.size()) {
    fail(ErrorCategory::kPrecondition, "build_submap: center or poses out of range");
  }
  const auto half = static_cast<std::size_t>(std::max(half_window, 0));
  const std::size_t first = center >= half ? center - half : 0;
  const std::size_t last = std::min(frames.size() - 1, center + half);
  const Pose center_from_world = (body_poses[center] * ext.radar_in_body).inverse();

  RadarFrame submap;
  submap.id = frames[center].id;
  submap.timestamp = frames[center].timestamp;
  for (std::size_t f = first; f <= last; ++f) {
    const Pose center_from_radar = center_from_world * (body_poses[f] * ext.radar_in_body);
    for (const Vec3& p : frames[f].points) submap.points.push_back(center_from_radar * p);
  }
  return submap;
}

LoopVerification verify_loop(const LoopCandidate& candidate, std::span<const RadarFrame> frames,
                             std::span<const Pose> body_poses, const Extrinsics& ext,
                             const LoopConfig& config) {
  if (candidate.query_id == candidate.match_id) {
    fail(ErrorCategory::kInvalidArgument, "loop candidate query and match are the same frame");
  }
  const std::size_t qi = frame_index(frames, candidate.query_id);
  const std::size_t mi = frame_index(frames, candidate.match_id);
  const RadarFrame query = build_submap(frames, body_poses, ext, qi, config.submap_half_window);
  const RadarFrame match = build_submap(frames, body_poses, ext, mi, config.submap_half_window);

  const RegistrationConfig& reg = config.registration;
  std::vector<std::vector<DiagCov3>> query_covs;
  std::vector<std::vector<DiagCov3>> match_covs;
  for (const double scale : reg.scales) {
    const double voxel = reg.voxel_size * scale;
    const LocalGrid qg =
        build_local_grid(frames, body_poses, ext, qi, config.submap_half_window, voxel);
    const LocalGrid mg =
        build_local_grid(frames, body_poses, ext, mi, config.submap_half_window, voxel);
    auto& qc = query_covs.emplace_back();
    for (const Vec3& p : query.points) qc.push_back(estimate_point_covariance(qg, p, config.covariance));
    auto& mc = match_covs.emplace_back();
    for (const Vec3& p : match.points) mc.push_back(estimate_point_covariance(mg, p, config.covariance));
  }

  const RegistrationResult r = register_pair(query, query_covs, match, match_covs, ext,
                                             between(body_poses[qi], body_poses[mi]), reg);
  LoopVerification out;
  out.candidate = candidate;
  out.accepted = r.accepted;
  out.reason = r.reason;
  out.loop = {candidate.query_id, candidate.match_id, r.relative, r.residual_rmse, r.inliers};
  return out;
}

RunConfig profile_config(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "snail") {
    c.voxel_size = 0.5;
    c.keyframe_threshold = 0.6;
  } else if (name == "coloradar") {
    c.voxel_size = 0.12;
    c.keyframe_threshold = 0.5;
  } else {
    fail(ErrorCategory::kInvalidArgument, "unknown profile '" + name + "'");
  }
  c.map_voxel = c.voxel_size;
  c.loop.registration.voxel_size = c.voxel_size;
  return c;
}

std::vector<Vec3> aggregate_map(std::span<const RadarFrame> frames,
                                std::span<const Pose> body_poses, const Extrinsics& ext,
                                double voxel) {
  if (frames.size() != body_poses.size()) {
    fail(ErrorCategory::kPrecondition, "aggregate_map: one pose per frame required");
  }
  std::vector<Vec3> cloud;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Pose world_from_radar = body_poses[f] * ext.radar_in_body;
    for (const Vec3& p : frames[f].points) cloud.push_back(world_from_radar * p);
  }
  return voxel_downsample(cloud, voxel);
}

RunResult run_pipeline(const Dataset& dataset, const RunConfig& config) {
  const std::size_t n = dataset.frames.size();
  if (n == 0) fail(ErrorCategory::kPrecondition, "dataset has no frames");
  if (dataset.initial.size() != n) {
    fail(ErrorCategory::kPrecondition, "dataset needs one initial state per frame");
  }
  const std::vector<Pose> poses = dataset.initial_poses();
  const Extrinsics& ext = dataset.ext;

  RunResult result;
  result.decisions = staged("keyframe selection", [&] {
    return select_keyframes(dataset.frames, poses, ext, config.voxel_size,
                            config.keyframe_threshold, config.window);
  });
  for (std::size_t i = 0; i < n; ++i) {
    if (result.decisions[i].is_keyframe) result.keyframe_indices.push_back(i);
  }
  const std::vector<std::size_t>& kf = result.keyframe_indices;
  const std::size_t m = kf.size();

  std::vector<RadarFrame> kf_frames;
  std::vector<KeyframeState> initial;
  for (const std::size_t i : kf) {
    kf_frames.push_back(dataset.frames[i]);
    initial.push_back(dataset.initial[i]);
  }

  KeyframeData data;
  data.frames = kf_frames;
  data.ext = ext;
  data.imu_noise = config.imu_noise;
  data.covariances = staged("covariance estimation", [&] {
    std::vector<std::vector<DiagCov3>> covs;
    for (const std::size_t i : kf) {
      covs.push_back(estimate_frame_covariances(dataset.frames, poses, ext, i,
                                                config.covariance_half_window, config.voxel_size,
                                                config.covariance));
    }
    return covs;
  });

  result.loops = staged("loop verification", [&] {
    std::vector<LoopVerification> out;
    LoopConfig lc = config.loop;
    lc.registration.voxel_size = config.voxel_size;
    for (const LoopCandidate& c : dataset.loop_candidates) {
      out.push_back(verify_loop(c, dataset.frames, poses, ext, lc));
    }
    return out;
  });
  for (const LoopVerification& v : result.loops) {
    if (!v.accepted) continue;
    data.loops.push_back({dataset.frames[dataset.index_of(v.candidate.query_id)].timestamp,
                          dataset.frames[dataset.index_of(v.candidate.match_id)].timestamp});
  }

  const bool have_imu = config.use_imu && !dataset.imu.empty();
  if (have_imu && m > 1) {
    data.imu = staged("imu preintegration", [&] {
      std::vector<PreintegratedImu> pre;
      for (std::size_t i = 0; i + 1 < m; ++i) {
        pre.push_back(preintegrate(dataset.imu, initial[i].timestamp, initial[i + 1].timestamp,
                                   initial[i].bias_gyro, initial[i].bias_accel,
                                   config.imu_noise));
      }
      return pre;
    });
  }
  if (config.use_ego_velocity) {
    const bool imu_available = !dataset.imu.empty();
    for (const RadarFrame& f : kf_frames) {
      if (!f.has_ego_velocity) {
        data.ego.emplace_back();
        continue;
      }
      EgoVelocityMeasurement meas;
      meas.v_r = f.ego_velocity;
      meas.covariance = f.ego_covariance;
      if (imu_available && f.timestamp >= dataset.imu.front().timestamp &&
          f.timestamp <= dataset.imu.back().timestamp) {
        meas.omega_b = interpolate_imu(dataset.imu, f.timestamp).gyro;
      }
      data.ego.push_back(meas);
    }
  }

  std::vector<Pose> covariance_poses;
  for (const KeyframeState& s : initial) covariance_poses.push_back(s.pose);
  if (config.refresh_covariances) {
    // Non-keyframes follow the correction of the latest keyframe at or before
    // them; only keyframes that moved noticeably are re-estimated.
    data.refresh_covariances = [&](const std::vector<KeyframeState>& states,
                                   std::vector<std::vector<DiagCov3>>& covs) {
      std::vector<Pose> current(n);
      std::size_t anchor = 0;
      for (std::size_t f = 0; f < n; ++f) {
        while (anchor + 1 < m && kf[anchor + 1] <= f) ++anchor;
        current[f] = states[anchor].pose * between(poses[kf[anchor]], poses[f]);
      }
      for (std::size_t k = 0; k < m; ++k) {
        const PoseError moved = pose_error(covariance_poses[k], states[k].pose);
        if (moved.translation <= config.refresh_translation &&
            moved.rotation <= config.refresh_rotation) {
          continue;
        }
        covs[k] = estimate_frame_covariances(dataset.frames, current, ext, kf[k],
                                             config.covariance_half_window, config.voxel_size,
                                             config.covariance);
        covariance_poses[k] = states[k].pose;
      }
    };
  }

  OuterConfig outer;
  outer.outer_iterations = config.outer_iterations;
  outer.inner = config.lm;
  outer.inner.max_iterations = config.inner_iterations;
  outer.voxel_size = config.voxel_size;
  outer.gate = config.gate;
  outer.priors = config.priors;
  outer.huber_delta = config.huber_delta;
  outer.max_gyro_bias = config.max_gyro_bias;
  outer.max_accel_bias = config.max_accel_bias;

  OuterResult solved = staged("bundle adjustment", [&] { return solve_outer(data, initial, outer); });
  result.keyframes = std::move(solved.states);
  result.report = std::move(solved.report);

  const PoseGraphResult graph = staged("pose graph", [&] {
    std::vector<Pose> odometry;
    for (std::size_t i = 0; i + 1 < n; ++i) odometry.push_back(between(poses[i], poses[i + 1]));
    std::vector<Pose> kf_poses;
    for (const KeyframeState& s : result.keyframes) kf_poses.push_back(s.pose);
    const PoseGraph g = build_pose_graph(n, kf, kf_poses, odometry, config.pose_graph);
    return solve_pose_graph(g, config.pose_graph);
  });
  result.pose_graph = graph.summary;

  result.trajectory.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    result.trajectory.push_back({dataset.frames[i].timestamp, graph.poses[i]});
  }
  result.map = aggregate_map(dataset.frames, graph.poses, ext, config.map_voxel);
  return result;
}

}  // namespace ramba
