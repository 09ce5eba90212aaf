#include "ramba/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <unordered_map>

#include "ramba/error.hpp"
#include "ramba/voxelgrid.hpp"

namespace ramba::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(salt)};
  return std::mt19937_64(seq);
}

Vec3 gaussian3(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return Vec3::Zero();
  std::normal_distribution<double> n(0.0, sigma);
  const double x = n(rng);
  const double y = n(rng);
  const double z = n(rng);
  return {x, y, z};
}

Mat3 yaw_matrix(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

// Gerono lemniscate (sin s, sin(2s)/2) arc length over one period, unit scale.
double figure_eight_unit_length() {
  constexpr int kSteps = 200000;
  double length = 0.0;
  for (int i = 0; i < kSteps; ++i) {
    const double s = (i + 0.5) * kTwoPi / kSteps;
    length += std::hypot(std::cos(s), std::cos(2.0 * s)) * kTwoPi / kSteps;
  }
  return length;
}

}  // namespace

TrajectoryKind parse_trajectory_kind(const std::string& name) {
  if (name == "line") return TrajectoryKind::kLine;
  if (name == "loop") return TrajectoryKind::kLoop;
  if (name == "figure-eight") return TrajectoryKind::kFigureEight;
  fail(ErrorCategory::kInvalidArgument, "unknown trajectory kind '" + name + "'");
}

Trajectory::Trajectory(const TrajectoryParams& params) : params_(params) {
  if (!(params.duration > 0.0)) {
    fail(ErrorCategory::kInvalidArgument, "trajectory duration must be positive");
  }
  switch (params.kind) {
    case TrajectoryKind::kLine:
      scale_ = 1.0;
      break;
    case TrajectoryKind::kLoop:
      scale_ = params.speed * params.duration / kTwoPi;
      break;
    case TrajectoryKind::kFigureEight:
      scale_ = params.speed * params.duration / figure_eight_unit_length();
      break;
  }
}

TrajectorySample Trajectory::at(double t) const {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  const double amp = params_.vertical_amplitude;
  const double w0 = kTwoPi / params_.duration;
  switch (params_.kind) {
    case TrajectoryKind::kLine:
      p = Vec3(params_.speed * t, 0.0, 0.0);
      v = Vec3(params_.speed, 0.0, 0.0);
      a = Vec3::Zero();
      break;
    case TrajectoryKind::kLoop: {
      const double r = scale_;
      const double c = std::cos(w0 * t);
      const double s = std::sin(w0 * t);
      const double c2 = std::cos(2.0 * w0 * t);
      const double s2 = std::sin(2.0 * w0 * t);
      p = Vec3(r * c, r * s, amp * s2);
      v = Vec3(-r * w0 * s, r * w0 * c, 2.0 * amp * w0 * c2);
      a = Vec3(-r * w0 * w0 * c, -r * w0 * w0 * s, -4.0 * amp * w0 * w0 * s2);
      break;
    }
    case TrajectoryKind::kFigureEight: {
      const double k = scale_;
      const double c = std::cos(w0 * t);
      const double s = std::sin(w0 * t);
      const double c2 = std::cos(2.0 * w0 * t);
      const double s2 = std::sin(2.0 * w0 * t);
      p = Vec3(k * s, 0.5 * k * s2, amp * s2);
      v = Vec3(k * w0 * c, k * w0 * c2, 2.0 * amp * w0 * c2);
      a = Vec3(-k * w0 * w0 * s, -2.0 * k * w0 * w0 * s2, -4.0 * amp * w0 * w0 * s2);
      break;
    }
  }

  const double yaw_local = std::atan2(v.y(), v.x());
  const double vxy2 = v.x() * v.x() + v.y() * v.y();
  const double yaw_rate = vxy2 > 0.0 ? (v.x() * a.y() - v.y() * a.x()) / vxy2 : 0.0;

  const Mat3 rh = yaw_matrix(params_.heading);
  TrajectorySample out;
  out.t = t;
  out.pose.translation = params_.center + rh * p;
  out.pose.rotation = Rotation(yaw_matrix(params_.heading + yaw_local));
  out.velocity_w = rh * v;
  out.accel_w = rh * a;
  out.omega_b = Vec3(0.0, 0.0, yaw_rate);
  return out;
}

Trajectory generate_trajectory(TrajectoryKind kind, double duration, double speed,
                               std::uint64_t seed) {
  auto rng = make_rng(seed, 0, 11);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  TrajectoryParams params;
  params.kind = kind;
  params.duration = duration;
  params.speed = speed;
  params.heading = u(rng);
  return Trajectory(params);
}

SyntheticWorld make_box_world(const WorldParams& params, std::uint64_t seed) {
  SyntheticWorld world;
  world.extent = params.extent;
  world.seed = seed;
  const double e = params.extent;
  const double h = params.height;
  const double half = 0.5 * e;

  world.surfaces.push_back({Vec3(-half, -half, 0.0), Vec3(e, 0, 0), Vec3(0, e, 0),
                            params.floor_density});
  world.surfaces.push_back({Vec3(-half, -half, 0.0), Vec3(e, 0, 0), Vec3(0, 0, h),
                            params.wall_density});
  world.surfaces.push_back({Vec3(-half, half, 0.0), Vec3(e, 0, 0), Vec3(0, 0, h),
                            params.wall_density});
  world.surfaces.push_back({Vec3(-half, -half, 0.0), Vec3(0, e, 0), Vec3(0, 0, h),
                            params.wall_density});
  world.surfaces.push_back({Vec3(half, -half, 0.0), Vec3(0, e, 0), Vec3(0, 0, h),
                            params.wall_density});

  auto rng = make_rng(seed, 0, 21);
  std::uniform_real_distribution<double> pos(-half + 2.0, half - 2.0 - params.pillar_size);
  const double s = params.pillar_size;
  int placed = 0;
  for (int attempt = 0; placed < params.pillars && attempt < 100 * (params.pillars + 1);
       ++attempt) {
    const double x = pos(rng);
    const double y = pos(rng);
    const double r = std::hypot(x + 0.5 * s, y + 0.5 * s);
    if (r > params.keep_out_inner - s && r < params.keep_out_outer + s) continue;
    const Vec3 o(x, y, 0.0);
    const Vec3 up(0, 0, h);
    world.surfaces.push_back({o, Vec3(s, 0, 0), up, params.wall_density});
    world.surfaces.push_back({o + Vec3(0, s, 0), Vec3(s, 0, 0), up, params.wall_density});
    world.surfaces.push_back({o, Vec3(0, s, 0), up, params.wall_density});
    world.surfaces.push_back({o + Vec3(s, 0, 0), Vec3(0, s, 0), up, params.wall_density});
    ++placed;
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double spacing = params.min_spacing;
  std::unordered_map<VoxelIndex, std::vector<std::size_t>, VoxelIndexHash> taken;
  const auto too_close = [&](const Vec3& p) {
    const VoxelIndex c = voxel_index(p, spacing);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = taken.find({c.i + dx, c.j + dy, c.k + dz});
          if (it == taken.end()) continue;
          for (std::size_t q : it->second) {
            if ((world.points[q] - p).norm() < spacing) return true;
          }
        }
      }
    }
    return false;
  };
  for (const SurfacePatch& patch : world.surfaces) {
    const double area = patch.u.cross(patch.v).norm();
    const auto n = static_cast<std::size_t>(std::lround(area * patch.density));
    for (std::size_t i = 0; i < n; ++i) {
      const double a = unit(rng);
      const double b = unit(rng);
      const Vec3 p = patch.origin + a * patch.u + b * patch.v;
      if (spacing > 0.0) {
        if (too_close(p)) continue;
        taken[voxel_index(p, spacing)].push_back(world.points.size());
      }
      world.points.push_back(p);
    }
  }
  return world;
}

RadarFrame render_radar_frame(const SyntheticWorld& world, const TrajectorySample& truth,
                              const Extrinsics& ext, const SensorParams& sensor,
                              std::uint64_t seed, FrameId id) {
  if (sensor.points_per_frame < 0 || !(sensor.max_range > 0.0)) {
    fail(ErrorCategory::kInvalidArgument, "invalid sensor parameters");
  }
  const Pose world_from_radar = truth.pose * ext.radar_in_body;
  const Pose radar_from_world = world_from_radar.inverse();
  const double half_h = 0.5 * sensor.horizontal_fov_deg * std::numbers::pi / 180.0;
  const double half_v = 0.5 * sensor.vertical_fov_deg * std::numbers::pi / 180.0;

  std::vector<std::size_t> visible;
  for (std::size_t i = 0; i < world.points.size(); ++i) {
    const Vec3 p = radar_from_world * world.points[i];
    const double range = p.norm();
    if (range < sensor.min_range || range > sensor.max_range) continue;
    if (std::abs(std::atan2(p.y(), p.x())) > half_h) continue;
    if (std::abs(std::asin(p.z() / range)) > half_v) continue;
    visible.push_back(i);
  }

  auto rng = make_rng(seed, static_cast<std::uint64_t>(id), 31);
  const auto budget = static_cast<std::size_t>(sensor.points_per_frame);
  if (visible.size() > budget) {
    std::shuffle(visible.begin(), visible.end(), rng);
    visible.resize(budget);
    std::sort(visible.begin(), visible.end());
  }

  RadarFrame frame;
  frame.id = id;
  frame.timestamp = truth.t;
  frame.points.reserve(visible.size());
  for (std::size_t i : visible) {
    Vec3 p = radar_from_world * world.points[i] + gaussian3(rng, sensor.point_noise_sigma);
    // Keep the range contract after noise.
    if (p.norm() > sensor.max_range) p *= sensor.max_range / p.norm();
    frame.points.push_back(p);
  }

  const Mat3 rbr_t = ext.radar_in_body.rotation.matrix().transpose();
  const Vec3 v_body = truth.pose.rotation.inverse() * truth.velocity_w;
  frame.has_ego_velocity = true;
  frame.ego_velocity = rbr_t * (v_body + truth.omega_b.cross(ext.radar_in_body.translation)) +
                       gaussian3(rng, sensor.ego_noise_sigma);
  frame.ego_covariance = Mat3::Identity() * sensor.ego_reported_sigma * sensor.ego_reported_sigma;
  return frame;
}

std::vector<ImuSample> render_imu(const Trajectory& trajectory, double t0, double t1,
                                  double rate_hz, const ImuNoise& noise, const Vec3& gravity_w,
                                  std::uint64_t seed) {
  if (rate_hz < 50.0) fail(ErrorCategory::kInvalidArgument, "IMU rate must be >= 50 Hz");
  auto rng = make_rng(seed, 0, 41);
  const double sg = noise.gyro_noise_density * std::sqrt(rate_hz);
  const double sa = noise.accel_noise_density * std::sqrt(rate_hz);
  const auto k0 = static_cast<long>(std::ceil(t0 * rate_hz - 1e-9));
  const auto k1 = static_cast<long>(std::floor(t1 * rate_hz + 1e-9));
  std::vector<ImuSample> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, k1 - k0 + 1)));
  for (long k = k0; k <= k1; ++k) {
    const double t = static_cast<double>(k) / rate_hz;
    const TrajectorySample s = trajectory.at(t);
    ImuSample m;
    m.timestamp = t;
    m.gyro = s.omega_b + noise.true_bias_gyro + gaussian3(rng, sg);
    m.accel = s.pose.rotation.inverse() * (s.accel_w - gravity_w) + noise.true_bias_accel +
              gaussian3(rng, sa);
    out.push_back(m);
  }
  return out;
}

std::vector<Pose> perturb_trajectory(std::span<const Pose> poses, double sigma_rot,
                                     double sigma_trans, PerturbMode mode, std::uint64_t seed) {
  if (sigma_rot < 0.0 || sigma_trans < 0.0) {
    fail(ErrorCategory::kInvalidArgument, "perturbation sigmas must be non-negative");
  }
  auto rng = make_rng(seed, 0, 51);
  std::vector<Pose> out(poses.begin(), poses.end());
  if (sigma_rot == 0.0 && sigma_trans == 0.0) return out;

  Rotation drift_rot;
  Vec3 drift_trans = Vec3::Zero();
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Vec3 dr = gaussian3(rng, sigma_rot);
    const Vec3 dt = gaussian3(rng, sigma_trans);
    if (mode == PerturbMode::kWhite) {
      out[i].rotation = Rotation::exp(dr) * poses[i].rotation;
      out[i].translation = poses[i].translation + dt;
    } else {
      if (i > 0) {
        drift_rot = Rotation::exp(dr) * drift_rot;
        drift_trans += dt;
      }
      out[i].rotation = drift_rot * poses[i].rotation;
      out[i].translation = poses[i].translation + drift_trans;
    }
  }
  return out;
}

ScenarioParams scenario(const std::string& name) {
  ScenarioParams p;
  p.ext.radar_in_body = Pose(Rotation::exp(Vec3(0.0, 0.015, 0.03)), Vec3(0.2, 0.05, 0.1));
  p.imu_noise.true_bias_gyro = Vec3(0.001, -0.002, 0.0015);
  p.imu_noise.true_bias_accel = Vec3(0.02, -0.01, 0.03);
  p.trajectory.center = Vec3(0.0, 0.0, 1.0);

  if (name == "line") {
    p.trajectory.kind = TrajectoryKind::kLine;
    p.trajectory.duration = 30.0;
    p.trajectory.speed = 1.0;
    p.trajectory.center = Vec3(-15.0, 0.0, 1.0);
  } else if (name == "loop" || name == "loop-drift") {
    p.trajectory.kind = TrajectoryKind::kLoop;
    p.trajectory.duration = name == "loop" ? 60.0 : 120.0;
    p.trajectory.speed = name == "loop" ? 1.0 : 0.7;
    p.trajectory.vertical_amplitude = 0.2;
    const double radius = p.trajectory.speed * p.trajectory.duration / kTwoPi;
    p.world.keep_out_inner = radius - 2.5;
    p.world.keep_out_outer = radius + 2.5;
    p.loops = {{-6, 3}};
    if (name == "loop-drift") {
      p.perturb_mode = PerturbMode::kRandomWalk;
      p.perturb_trans = 0.05;
      p.perturb_rot = 0.002;
    }
  } else if (name == "figure-eight") {
    p.trajectory.kind = TrajectoryKind::kFigureEight;
    p.trajectory.duration = 60.0;
    p.trajectory.speed = 1.0;
    p.trajectory.vertical_amplitude = 0.2;
    p.world.pillars = 6;
    p.world.keep_out_inner = 0.0;
    p.world.keep_out_outer = 12.0;
  } else {
    fail(ErrorCategory::kInvalidArgument, "unknown scenario '" + name + "'");
  }
  return p;
}

Dataset simulate(const ScenarioParams& params, std::uint64_t seed) {
  const Trajectory trajectory(params.trajectory);
  const SyntheticWorld world = make_box_world(params.world, seed);

  Dataset ds;
  ds.ext = params.ext;
  const auto n = static_cast<std::size_t>(
      std::ceil(params.trajectory.duration * params.radar_rate_hz - 1e-9));
  std::vector<Pose> truth;
  std::vector<TrajectorySample> samples;
  truth.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / params.radar_rate_hz;
    samples.push_back(trajectory.at(t));
    truth.push_back(samples.back().pose);
    ds.frames.push_back(render_radar_frame(world, samples.back(), params.ext, params.sensor, seed,
                                           static_cast<FrameId>(k)));
  }
  ds.imu = render_imu(trajectory, 0.0, params.trajectory.duration, params.imu_rate_hz,
                      params.imu_noise, params.ext.gravity_w, seed);

  const std::vector<Pose> init = perturb_trajectory(truth, params.perturb_rot, params.perturb_trans,
                                                    params.perturb_mode, seed);
  for (std::size_t k = 0; k < n; ++k) {
    KeyframeState s;
    s.pose = init[k];
    s.velocity_w = samples[k].velocity_w;
    s.bias_gyro = params.imu_noise.true_bias_gyro;
    s.bias_accel = params.imu_noise.true_bias_accel;
    s.timestamp = samples[k].t;
    s.frame_id = static_cast<FrameId>(k);
    ds.initial.push_back(s);
  }
  for (const auto& [q, m] : params.loops) {
    const long nn = static_cast<long>(n);
    const long qi = q < 0 ? nn + q : q;
    const long mi = m < 0 ? nn + m : m;
    if (qi < 0 || mi < 0 || qi >= nn || mi >= nn || qi == mi) continue;
    ds.loop_candidates.push_back({static_cast<FrameId>(qi), static_cast<FrameId>(mi), 1.0});
  }
  ds.ground_truth = std::move(truth);
  return ds;
}

}  // namespace ramba::sim
