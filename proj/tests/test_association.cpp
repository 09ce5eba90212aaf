#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "oracles.hpp"
#include "ramba/association.hpp"
#include "test_support.hpp"

using namespace ramba;
using ramba::testing::random_pose;
using ramba::testing::random_vec;

namespace {

struct Scene {
  std::vector<RadarFrame> frames;
  std::vector<KeyframeState> states;
  std::vector<std::vector<DiagCov3>> covs;
  std::vector<double> timestamps;
};

void add_frame(Scene& s, std::vector<Vec3> points, const Pose& pose, double t) {
  RadarFrame f;
  f.id = static_cast<FrameId>(s.frames.size());
  f.timestamp = t;
  f.points = std::move(points);
  KeyframeState st;
  st.pose = pose;
  st.timestamp = t;
  st.frame_id = f.id;
  s.covs.emplace_back(f.points.size());
  s.frames.push_back(std::move(f));
  s.states.push_back(st);
  s.timestamps.push_back(t);
}

WorldVoxelGrid grid_of(const Scene& s, double voxel = 0.5, const Extrinsics& ext = {}) {
  return build_world_grid(s.frames, s.states, s.covs, ext, voxel);
}

Vec3 in_voxel(int i, int j, int k, double voxel = 0.5) {
  return Vec3(i + 0.5, j + 0.5, k + 0.5) * voxel;
}

std::set<std::tuple<oracle::Key, std::size_t, std::size_t>> as_set(
    const std::vector<Correspondence>& cs) {
  std::set<std::tuple<oracle::Key, std::size_t, std::size_t>> out;
  for (const auto& c : cs) out.insert({{c.voxel.i, c.voxel.j, c.voxel.k}, c.index_j, c.index_k});
  return out;
}

}  // namespace

TEST(WorldGrid, DistinctVoxelsOneEntryPerPoint) {
  Scene s;
  add_frame(s, {in_voxel(0, 0, 0), in_voxel(1, 0, 0), in_voxel(0, 3, -2)}, Pose::identity(), 0.0);
  const WorldVoxelGrid g = grid_of(s);
  EXPECT_EQ(g.entry_count(), 3u);
  EXPECT_EQ(g.occupied[0], 3u);
}

TEST(WorldGrid, KeepsPointNearestVoxelCenter) {
  Scene s;
  add_frame(s, {Vec3(0.1, 0, 0), Vec3(0.2, 0, 0)}, Pose::identity(), 0.0);
  const WorldVoxelGrid g = grid_of(s);
  ASSERT_EQ(g.entry_count(), 1u);
  const GridEntry& e = g.voxels.begin()->second.front();
  EXPECT_EQ(e.point_index, 1u);
  EXPECT_EQ(e.point, Vec3(0.2, 0, 0));
}

TEST(WorldGrid, TieKeepsLowestPointIndex) {
  Scene s;
  add_frame(s, {Vec3(0.125, 0.25, 0.25), Vec3(0.375, 0.25, 0.25)}, Pose::identity(), 0.0);
  const WorldVoxelGrid g = grid_of(s);
  EXPECT_EQ(g.voxels.begin()->second.front().point_index, 0u);
}

TEST(WorldGrid, IdenticalFramesGiveTwoEntriesPerVoxel) {
  std::mt19937_64 rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.push_back(random_vec(rng, 10.0));
  const Pose pose = random_pose(rng);
  Scene s;
  add_frame(s, pts, pose, 0.0);
  add_frame(s, pts, pose, 0.1);
  const WorldVoxelGrid g = grid_of(s);
  for (const auto& [_, entries] : g.voxels) EXPECT_EQ(entries.size(), 2u);
}

TEST(WorldGrid, StoredPointsFallInsideTheirVoxel) {
  std::mt19937_64 rng(2);
  Extrinsics ext;
  ext.radar_in_body = random_pose(rng, 0.4);
  Scene s;
  for (int f = 0; f < 6; ++f) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 200; ++i) pts.push_back(random_vec(rng, 6.0));
    add_frame(s, pts, random_pose(rng, 1.0), f);
  }
  const WorldVoxelGrid g = grid_of(s, 0.4, ext);
  for (const auto& [key, entries] : g.voxels) {
    std::set<std::size_t> frames_seen;
    for (const GridEntry& e : entries) {
      EXPECT_TRUE(frames_seen.insert(e.frame_index).second) << "two entries from one frame";
      const Vec3 w = transform_radar_point(s.states[e.frame_index], ext, e.point);
      EXPECT_EQ(voxel_index(w, 0.4), key);
    }
  }
}

TEST(Overlap, Examples) {
  Scene s;
  add_frame(s, {in_voxel(1, 0, 0), in_voxel(2, 0, 0), in_voxel(3, 0, 0), in_voxel(4, 0, 0)},
            Pose::identity(), 0.0);
  add_frame(s, {in_voxel(3, 0, 0), in_voxel(4, 0, 0), in_voxel(5, 0, 0)}, Pose::identity(), 1.0);
  add_frame(s, {in_voxel(9, 9, 9)}, Pose::identity(), 2.0);
  add_frame(s, {}, Pose::identity(), 3.0);
  const WorldVoxelGrid g = grid_of(s);
  EXPECT_DOUBLE_EQ(voxel_overlap_ratio(0, 0, g), 1.0);
  EXPECT_DOUBLE_EQ(voxel_overlap_ratio(0, 1, g), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(voxel_overlap_ratio(1, 0, g), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(voxel_overlap_ratio(0, 2, g), 0.0);
  EXPECT_DOUBLE_EQ(voxel_overlap_ratio(0, 3, g), 0.0);
  const auto all = pairwise_overlaps(g);
  EXPECT_DOUBLE_EQ(all.at({0, 1}), 2.0 / 3.0);
  EXPECT_EQ(all.count({0, 2}), 0u);
}

TEST(Gate, Examples) {
  EXPECT_TRUE(frame_pair_valid(10, 25, 0.3, {}));
  EXPECT_FALSE(frame_pair_valid(10, 100, 0.5, {}));
  const std::vector<LoopWindow> loop{{12, 98}};
  EXPECT_TRUE(frame_pair_valid(10, 100, 0.5, loop));
  EXPECT_TRUE(frame_pair_valid(100, 10, 0.5, loop));
  EXPECT_FALSE(frame_pair_valid(10, 25, 0.1, {}));
  EXPECT_FALSE(frame_pair_valid(10, 40, 0.5, {}));
}

TEST(Gate, MatchesPredicateOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> t(0.0, 200.0);
  std::uniform_real_distribution<double> ov(0.0, 0.3);
  std::uniform_int_distribution<int> nloops(0, 3);
  for (int trial = 0; trial < 20000; ++trial) {
    std::vector<LoopWindow> loops;
    std::vector<std::pair<double, double>> plain;
    for (int l = nloops(rng); l > 0; --l) {
      loops.push_back({t(rng), t(rng)});
      plain.emplace_back(loops.back().t_query, loops.back().t_match);
    }
    const double ta = t(rng);
    const double tb = trial % 4 == 0 ? ta + 30.0 : t(rng);
    const double o = trial % 7 == 0 ? 0.1 : ov(rng);
    ASSERT_EQ(frame_pair_valid(ta, tb, o, loops), oracle::pair_admitted(ta, tb, o, plain))
        << ta << ' ' << tb << ' ' << o;
  }
}

TEST(Correspondences, ThreeFramesInOneVoxel) {
  Scene s;
  for (int f = 0; f < 3; ++f) add_frame(s, {in_voxel(0, 0, 0)}, Pose::identity(), f);
  const auto cs = collect_correspondences(grid_of(s), s.timestamps, {});
  ASSERT_EQ(cs.size(), 3u);
  for (const auto& c : cs) EXPECT_LT(c.index_j, c.index_k);
}

TEST(Correspondences, EmptyWhenTemporalGateFails) {
  Scene s;
  for (int f = 0; f < 3; ++f) add_frame(s, {in_voxel(0, 0, 0)}, Pose::identity(), 100.0 * f);
  EXPECT_TRUE(collect_correspondences(grid_of(s), s.timestamps, {}).empty());
}

TEST(Correspondences, HundredSharedVoxels) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i) pts.push_back(in_voxel(i % 10, i / 10, 0));
  Scene s;
  add_frame(s, pts, Pose::identity(), 0.0);
  add_frame(s, pts, Pose::identity(), 1.0);
  const auto cs = collect_correspondences(grid_of(s), s.timestamps, {});
  EXPECT_EQ(cs.size(), 100u);
  EXPECT_TRUE(std::is_sorted(cs.begin(), cs.end(), [](const auto& a, const auto& b) {
    return a.voxel < b.voxel;
  }));
}

TEST(Correspondences, LoopAdmitsDistantPairs) {
  Scene s;
  add_frame(s, {in_voxel(0, 0, 0)}, Pose::identity(), 0.0);
  add_frame(s, {in_voxel(0, 0, 0)}, Pose::identity(), 100.0);
  EXPECT_TRUE(collect_correspondences(grid_of(s), s.timestamps, {}).empty());
  const std::vector<LoopWindow> loops{{5.0, 95.0}};
  EXPECT_EQ(collect_correspondences(grid_of(s), s.timestamps, loops).size(), 1u);
}

TEST(Correspondences, MatchBruteForceAndAreOrderSymmetric) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    Scene s;
    std::vector<Vec3> world;
    for (int i = 0; i < 150; ++i) world.push_back(random_vec(rng, 5.0));
    const int n = 3 + trial % 6;
    std::uniform_real_distribution<double> t(0.0, 120.0);
    for (int f = 0; f < n; ++f) {
      const Pose pose = random_pose(rng, 0.3);
      std::vector<Vec3> pts;
      for (const Vec3& w : world) {
        if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5) {
          pts.push_back(pose.inverse() * (w + random_vec(rng, 0.05)));
        }
      }
      add_frame(s, pts, pose, t(rng));
    }
    std::vector<LoopWindow> loops;
    std::vector<std::pair<double, double>> plain;
    if (trial % 2) {
      loops.push_back({s.timestamps[0], s.timestamps[1]});
      plain.emplace_back(s.timestamps[0], s.timestamps[1]);
    }
    const auto cs = collect_correspondences(grid_of(s), s.timestamps, loops);
    const auto expected = oracle::admitted_pairs(
        oracle::representatives(s.frames, s.states, Extrinsics{}, 0.5), s.timestamps, plain);
    EXPECT_EQ(as_set(cs), expected);
    EXPECT_EQ(cs.size(), expected.size());

    std::size_t bound = 0;
    for (const auto& [_, entries] : grid_of(s).voxels) {
      bound += entries.size() * (entries.size() - 1) / 2;
    }
    EXPECT_LE(cs.size(), bound);

    for (const auto& c : cs) {
      const double o = voxel_overlap_ratio(c.index_j, c.index_k, grid_of(s));
      EXPECT_TRUE(frame_pair_valid(s.timestamps[c.index_j], s.timestamps[c.index_k], o, loops));
    }

    // Reverse the frame order; the (voxel, frame pair) set must not change.
    Scene r;
    for (int f = n - 1; f >= 0; --f) {
      add_frame(r, s.frames[f].points, s.states[f].pose, s.timestamps[f]);
    }
    std::set<std::tuple<oracle::Key, std::size_t, std::size_t>> remapped;
    for (const auto& c : collect_correspondences(grid_of(r), r.timestamps, loops)) {
      const std::size_t a = n - 1 - c.index_j;
      const std::size_t b = n - 1 - c.index_k;
      remapped.insert({{c.voxel.i, c.voxel.j, c.voxel.k}, std::min(a, b), std::max(a, b)});
    }
    EXPECT_EQ(remapped, as_set(cs));
  }
}
