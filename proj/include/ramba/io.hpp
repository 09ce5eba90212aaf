#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ramba/dataset.hpp"
#include "ramba/eval.hpp"
#include "ramba/pipeline.hpp"

// Dataset directory layout (all text files whitespace separated, '#' starts a
// comment line):
//
//   manifest.json    stream paths, extrinsics, gravity, trajectory_frame
//   frames.txt       id timestamp points_file
//   <points_file>    x y z per line, radar frame
//   imu.txt          t gx gy gz ax ay az
//   trajectory.txt   t tx ty tz qx qy qz qw [vx vy vz bgx bgy bgz bax bay baz]
//   ego.txt          t vx vy vz [cxx cxy cxz cyy cyz czz]        (optional)
//   loops.txt        query_id match_id score                    (optional)
//   groundtruth.txt  t tx ty tz qx qy qz qw, body frame          (optional)

namespace ramba::io {

namespace fs = std::filesystem;

void write_trajectory(const fs::path& path, std::span<const StampedPose> trajectory);
StampedTrajectory read_trajectory(const fs::path& path);

/// t, pose, velocity, gyro bias, accel bias (17 columns).
void write_states(const fs::path& path, std::span<const KeyframeState> states);

/// ASCII PLY with double x, y, z.
void write_ply(const fs::path& path, std::span<const Vec3> points);
/// Reads x, y, z from ASCII or binary little-endian PLY vertex elements.
std::vector<Vec3> read_ply(const fs::path& path);

void write_loop_candidates(const fs::path& path, std::span<const LoopCandidate> loops);
std::vector<LoopCandidate> read_loop_candidates(const fs::path& path);

std::string config_to_json(const RunConfig& config);
/// Starts from the profile named by "profile" (default "snail") and applies
/// the remaining keys. Unknown keys are rejected.
RunConfig config_from_json(const std::string& text);
RunConfig read_config(const fs::path& path);

struct LoadReport {
  std::vector<std::string> warnings;
};

/// Parses and validates a dataset directory. Every problem found is listed in
/// one kData error with file and line; a missing manifest is kIo.
Dataset load_dataset(const fs::path& dir, LoadReport* report = nullptr);

/// Writes `dataset` in the layout above (body-frame trajectory).
void write_dataset(const fs::path& dir, const Dataset& dataset);

/// trajectory.txt, keyframes.txt, map.ply, report.json and config.json.
void write_outputs(const fs::path& dir, const RunResult& result, const RunConfig& config);

std::string metric_report_json(const MetricReport& report);

}  // namespace ramba::io
