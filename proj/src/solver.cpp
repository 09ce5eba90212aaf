#include "ramba/solver.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ramba/error.hpp"

namespace ramba {

namespace {

struct KeyframeLmAdapter {
  const Problem& problem;

  std::vector<FactorBlock> linearize(const std::vector<KeyframeState>& at) const {
    return problem.factors(at);
  }
  double objective(const std::vector<KeyframeState>& at) const { return problem.objective(at); }
  KeyframeState retract(const KeyframeState& s, const Tangent& d) const {
    return ramba::retract(s, d);
  }
};

double huber_cost(double s2, double delta) {
  if (s2 <= delta * delta) return s2;
  return 2.0 * delta * std::sqrt(s2) - delta * delta;
}

}  // namespace

std::vector<FactorBlock> Problem::factors(const std::vector<KeyframeState>& at) const {
  std::vector<FactorBlock> out;
  out.reserve(correspondences.size() + imu.size() + ego.size() + 2);

  for (const Correspondence& c : correspondences) {
    FactorBlock f = geometric_factor(c, at[c.index_j], at[c.index_k], ext);
    if (huber_delta) {
      const double s = f.whitened().norm();
      if (s > *huber_delta) f.sqrt_information *= std::sqrt(*huber_delta / s);
    }
    out.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < imu.size(); ++i) {
    FactorBlock f = imu_residual(imu[i], at[i], at[i + 1], ext.gravity_w, imu_noise);
    f.states = {i, i + 1};
    out.push_back(std::move(f));
  }
  for (std::size_t i = 0; i < ego.size(); ++i) {
    if (!ego[i]) continue;
    FactorBlock f = ego_velocity_residual(at[i], *ego[i], ext);
    f.states = {i};
    out.push_back(std::move(f));
  }
  if (priors.enabled && !at.empty()) {
    auto [pose, bias] =
        prior_factors(at[0], pose_prior, priors.pose_covariance, bias_prior, priors.bias_covariance);
    out.push_back(std::move(pose));
    out.push_back(std::move(bias));
  }
  return out;
}

double Problem::objective(const std::vector<KeyframeState>& at) const {
  double total = 0.0;
  for (const Correspondence& c : correspondences) {
    const double s2 = geometric_factor(c, at[c.index_j], at[c.index_k], ext).cost();
    total += huber_delta ? huber_cost(s2, *huber_delta) : s2;
  }
  for (std::size_t i = 0; i < imu.size(); ++i) {
    total += imu_residual(imu[i], at[i], at[i + 1], ext.gravity_w, imu_noise).cost();
  }
  for (std::size_t i = 0; i < ego.size(); ++i) {
    if (ego[i]) total += ego_velocity_residual(at[i], *ego[i], ext).cost();
  }
  if (priors.enabled && !at.empty()) {
    total += pose_prior_factor(at[0], pose_prior, priors.pose_covariance).cost();
    total += bias_prior_factor(at[0], bias_prior, priors.bias_covariance).cost();
  }
  return total;
}

double geometric_cost(std::span<const Correspondence> correspondences,
                      std::span<const KeyframeState> states, const Extrinsics& ext) {
  double total = 0.0;
  for (const Correspondence& c : correspondences) {
    total += geometric_factor(c, states[c.index_j], states[c.index_k], ext).cost();
  }
  return total;
}

SolveReport solve_inner(Problem& problem, const LmParams& params) {
  const auto start = std::chrono::steady_clock::now();
  for (const Correspondence& c : problem.correspondences) {
    if (c.index_j >= problem.states.size() || c.index_k >= problem.states.size()) {
      fail(ErrorCategory::kStructural, "correspondence references a missing keyframe");
    }
  }
  if (!problem.imu.empty() && problem.imu.size() + 1 != problem.states.size()) {
    fail(ErrorCategory::kStructural, "IMU factor count must be keyframe count - 1");
  }
  if (!problem.ego.empty() && problem.ego.size() != problem.states.size()) {
    fail(ErrorCategory::kStructural, "ego-velocity measurements must be index-aligned");
  }

  KeyframeLmAdapter adapter{problem};
  LmSummary summary =
      solve_sparse_lm<tangent::kDim>(adapter, problem.states, problem.fixed, params);

  SolveReport report;
  for (const LmIteration& it : summary.iterations) {
    report.objective.push_back(it.objective_after);
    report.step_norms.push_back(it.step_norm);
  }
  report.final_gradient_norm = summary.gradient_norm;
  report.inner.push_back(std::move(summary));
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

OuterResult solve_outer(KeyframeData& data, std::vector<KeyframeState> initial,
                        const OuterConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t m = initial.size();
  if (data.frames.size() != m || data.covariances.size() != m) {
    fail(ErrorCategory::kPrecondition, "solve_outer: keyframe data not aligned with states");
  }

  Problem problem;
  problem.states = std::move(initial);
  problem.ext = data.ext;
  problem.imu = data.imu;
  problem.ego = data.ego;
  problem.imu_noise = data.imu_noise;
  problem.priors = config.priors;
  problem.huber_delta = config.huber_delta;
  if (m > 0) {
    problem.pose_prior = problem.states.front().pose;
    problem.bias_prior << problem.states.front().bias_gyro, problem.states.front().bias_accel;
  }

  std::vector<double> timestamps(m);
  for (std::size_t i = 0; i < m; ++i) timestamps[i] = problem.states[i].timestamp;

  OuterResult result;
  SolveReport& report = result.report;
  for (int outer = 0; outer < config.outer_iterations; ++outer) {
    if (outer > 0 && data.refresh_covariances) {
      data.refresh_covariances(problem.states, data.covariances);
    }
    const WorldVoxelGrid grid = build_world_grid(data.frames, problem.states, data.covariances,
                                                 data.ext, config.voxel_size);
    problem.correspondences =
        collect_correspondences(grid, timestamps, data.loops, config.gate);
    report.correspondence_counts.push_back(problem.correspondences.size());
    if (problem.correspondences.empty()) {
      fail(ErrorCategory::kData, "outer iteration " + std::to_string(outer) +
                                     ": no correspondences (no multi-frame overlap)");
    }
    SolveReport inner = solve_inner(problem, config.inner);
    report.objective.insert(report.objective.end(), inner.objective.begin(),
                            inner.objective.end());
    report.step_norms.insert(report.step_norms.end(), inner.step_norms.begin(),
                             inner.step_norms.end());
    report.final_gradient_norm = inner.final_gradient_norm;
    for (auto& s : inner.inner) report.inner.push_back(std::move(s));
  }

  for (const KeyframeState& s : problem.states) {
    if (s.bias_gyro.norm() > config.max_gyro_bias || s.bias_accel.norm() > config.max_accel_bias) {
      std::ostringstream msg;
      msg << "keyframe " << s.frame_id << " bias out of bounds: |bg|=" << s.bias_gyro.norm()
          << " |ba|=" << s.bias_accel.norm();
      report.diagnostics.push_back(msg.str());
    }
  }
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  result.states = std::move(problem.states);
  return result;
}

}  // namespace ramba
