#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ramba/core.hpp"
#include "ramba/dataset.hpp"
#include "ramba/factors.hpp"

namespace ramba::sim {

enum class TrajectoryKind { kLine, kLoop, kFigureEight };

TrajectoryKind parse_trajectory_kind(const std::string& name);

struct TrajectorySample {
  double t = 0.0;
  Pose pose;  ///< body in world
  Vec3 velocity_w = Vec3::Zero();
  Vec3 accel_w = Vec3::Zero();
  Vec3 omega_b = Vec3::Zero();
};

struct TrajectoryParams {
  TrajectoryKind kind = TrajectoryKind::kLoop;
  double duration = 60.0;
  double speed = 1.0;  ///< mean speed, m/s
  Vec3 center = Vec3::Zero();
  double heading = 0.0;             ///< line heading / loop phase, rad
  double vertical_amplitude = 0.0;  ///< loop and figure-eight only, m
};

/// Smooth (C^2) ground-truth trajectory with analytic derivatives. Yaw follows
/// the horizontal velocity direction; body z stays aligned with world z.
class Trajectory {
 public:
  explicit Trajectory(const TrajectoryParams& params);

  TrajectorySample at(double t) const;
  const TrajectoryParams& params() const { return params_; }

 private:
  TrajectoryParams params_;
  double scale_ = 1.0;  ///< loop radius or figure-eight half-width
};

/// Convenience constructor: the seed picks the heading/phase.
Trajectory generate_trajectory(TrajectoryKind kind, double duration, double speed,
                               std::uint64_t seed);

struct SurfacePatch {
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();  ///< patch = origin + a u + b v, a, b in [0, 1]
  Vec3 v = Vec3::UnitY();
  double density = 0.5;  ///< points per m^2
};

struct WorldParams {
  double extent = 40.0;  ///< box side, m
  double height = 5.0;
  double wall_density = 0.6;
  double floor_density = 0.15;
  int pillars = 12;
  double pillar_size = 1.5;
  /// Pillars are kept outside this annulus around the center (empty = none).
  double keep_out_inner = 0.0;
  double keep_out_outer = 0.0;
  /// Scatterers closer than this to an earlier one are dropped (0 = off).
  double min_spacing = 0.0;
};

/// Stationary scatterers sampled on planar surfaces.
struct SyntheticWorld {
  std::vector<SurfacePatch> surfaces;
  std::vector<Vec3> points;
  double extent = 0.0;
  std::uint64_t seed = 0;
};

SyntheticWorld make_box_world(const WorldParams& params, std::uint64_t seed);

struct SensorParams {
  double max_range = 30.0;
  double min_range = 0.5;
  double horizontal_fov_deg = 120.0;
  double vertical_fov_deg = 40.0;
  int points_per_frame = 150;
  double point_noise_sigma = 0.03;  ///< isotropic, per axis, m
  double ego_noise_sigma = 0.0;     ///< injected ego-velocity noise, m/s
  double ego_reported_sigma = 0.05; ///< sigma written into the ego covariance
};

/// Visible scatterers in the radar frame with seeded Gaussian noise, plus the
/// ego velocity R_BR^T (R_WB^T v + omega x p_BR). A frame with no visible
/// points is returned empty.
RadarFrame render_radar_frame(const SyntheticWorld& world, const TrajectorySample& truth,
                              const Extrinsics& ext, const SensorParams& sensor,
                              std::uint64_t seed, FrameId id);

/// Samples at k / rate_hz for t in [t0, t1]: accel = R^T (a_w - g) + b_a + n,
/// gyro = omega_b + b_g + n. Throws kInvalidArgument for rate < 50 Hz.
std::vector<ImuSample> render_imu(const Trajectory& trajectory, double t0, double t1,
                                  double rate_hz, const ImuNoise& noise, const Vec3& gravity_w,
                                  std::uint64_t seed);

enum class PerturbMode { kWhite, kRandomWalk };

/// Left-multiplied rotation noise and additive translation noise; random-walk
/// mode accumulates the increments along the sequence.
std::vector<Pose> perturb_trajectory(std::span<const Pose> poses, double sigma_rot,
                                     double sigma_trans, PerturbMode mode, std::uint64_t seed);

struct ScenarioParams {
  TrajectoryParams trajectory;
  WorldParams world;
  SensorParams sensor;
  Extrinsics ext;
  ImuNoise imu_noise;
  double radar_rate_hz = 10.0;
  double imu_rate_hz = 200.0;
  double perturb_rot = 0.0;
  double perturb_trans = 0.0;
  PerturbMode perturb_mode = PerturbMode::kRandomWalk;
  /// (query, match) frame indices written as loop candidates; negative values
  /// count from the end of the sequence.
  std::vector<std::pair<long, long>> loops;
};

/// Named presets: "line", "loop", "figure-eight", "loop-drift".
ScenarioParams scenario(const std::string& name);

/// Renders the full dataset. Ground truth is always attached; initial states
/// carry the (optionally perturbed) poses, true velocities and the true
/// constant IMU biases.
Dataset simulate(const ScenarioParams& params, std::uint64_t seed);

}  // namespace ramba::sim
