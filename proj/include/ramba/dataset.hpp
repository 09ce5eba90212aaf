#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ramba/core.hpp"
#include "ramba/factors.hpp"

namespace ramba {

/// Loop candidate from an external place-recognition stage.
struct LoopCandidate {
  FrameId query_id = 0;
  FrameId match_id = 0;
  double score = 0.0;
};

/// In-memory dataset: radar frames, IMU stream, the front-end's per-frame
/// initial states (body frame), loop candidates and calibration.
struct Dataset {
  std::vector<RadarFrame> frames;
  std::vector<ImuSample> imu;
  std::vector<KeyframeState> initial;  ///< one per frame, index-aligned
  std::vector<LoopCandidate> loop_candidates;
  Extrinsics ext;
  /// Body poses, index-aligned with frames; optional.
  std::optional<std::vector<Pose>> ground_truth;

  std::size_t index_of(FrameId id) const;  ///< throws kData if absent
  std::vector<Pose> initial_poses() const;
};

}  // namespace ramba
