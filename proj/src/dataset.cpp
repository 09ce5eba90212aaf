#include "ramba/dataset.hpp"

#include <string>

#include "ramba/error.hpp"

namespace ramba {

std::size_t Dataset::index_of(FrameId id) const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].id == id) return i;
  }
  fail(ErrorCategory::kData, "unknown frame id " + std::to_string(id));
}

std::vector<Pose> Dataset::initial_poses() const {
  std::vector<Pose> out;
  out.reserve(initial.size());
  for (const auto& s : initial) out.push_back(s.pose);
  return out;
}

}  // namespace ramba
