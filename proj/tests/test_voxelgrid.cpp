#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numbers>
#include <random>
#include <vector>

#include "ramba/error.hpp"
#include "ramba/voxelgrid.hpp"
#include "test_support.hpp"

using namespace ramba;
using ramba::testing::random_pose;
using ramba::testing::random_rotation;
using ramba::testing::random_vec;

namespace {

RadarFrame frame_with(std::vector<Vec3> points, FrameId id = 0) {
  RadarFrame f;
  f.id = id;
  f.points = std::move(points);
  return f;
}

LocalGrid grid_of(const std::vector<Vec3>& points, double voxel_size) {
  const std::vector<RadarFrame> frames{frame_with(points)};
  const std::vector<Pose> poses{Pose::identity()};
  return build_local_grid(frames, poses, Extrinsics{}, 0, 0, voxel_size);
}

ErrorCategory category_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.category();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorCategory::kIo;
}

}  // namespace

TEST(VoxelIndex, FloorPerAxis) {
  EXPECT_EQ(voxel_index(Vec3(0.3, 0.7, -0.2), 0.5), (VoxelIndex{0, 1, -1}));
  EXPECT_EQ(voxel_index(Vec3::Zero(), 0.5), (VoxelIndex{0, 0, 0}));
  EXPECT_EQ(voxel_index(Vec3::Zero(), 0.12), (VoxelIndex{0, 0, 0}));
  EXPECT_EQ(voxel_index(Vec3(0.12, 0.12, 0.12), 0.12), (VoxelIndex{1, 1, 1}));
}

TEST(VoxelIndex, NegativeBoundary) {
  EXPECT_EQ(voxel_index(Vec3(-0.5, -0.0, -1e-12), 0.5), (VoxelIndex{-1, 0, -1}));
}

TEST(VoxelIndex, RejectsNonPositiveSize) {
  EXPECT_EQ(category_of([] { voxel_index(Vec3::Zero(), 0.0); }), ErrorCategory::kInvalidArgument);
  EXPECT_EQ(category_of([] { voxel_index(Vec3::Zero(), -1.0); }), ErrorCategory::kInvalidArgument);
}

TEST(LocalGrid, SingleFrameHoldsExactlyItsPoints) {
  const std::vector<Vec3> pts{{0.1, 0.1, 0.1}, {1.2, 0.3, -0.4}, {1.3, 0.2, -0.3}};
  const LocalGrid g = grid_of(pts, 0.5);
  EXPECT_EQ(g.point_count(), 3u);
  EXPECT_EQ(g.cells.size(), 2u);
}

TEST(LocalGrid, IdenticalCoLocatedFramesDoubleEveryVoxel) {
  std::mt19937_64 rng(1);
  std::vector<Vec3> pts;
  for (int i = 0; i < 200; ++i) pts.push_back(random_vec(rng, 10.0));
  const std::vector<RadarFrame> frames{frame_with(pts, 0), frame_with(pts, 1)};
  const Pose pose = random_pose(rng);
  const std::vector<Pose> poses{pose, pose};
  Extrinsics ext;
  ext.radar_in_body = random_pose(rng, 0.3);
  const LocalGrid single = build_local_grid(std::span(frames).first(1), std::span(poses).first(1),
                                            ext, 0, 0, 0.5);
  const LocalGrid both = build_local_grid(frames, poses, ext, 0, 1, 0.5);
  ASSERT_EQ(single.cells.size(), both.cells.size());
  for (const auto& [key, points] : single.cells) {
    ASSERT_TRUE(both.cells.count(key));
    EXPECT_EQ(both.cells.at(key).size(), 2 * points.size());
  }
}

TEST(LocalGrid, WindowTruncatedAtSequenceEnds) {
  std::vector<RadarFrame> frames;
  std::vector<Pose> poses;
  for (int i = 0; i < 30; ++i) {
    frames.push_back(frame_with({Vec3(i, 0, 0)}, i));
    poses.push_back(Pose::identity());
  }
  const LocalGrid start = build_local_grid(frames, poses, Extrinsics{}, 0, 10, 0.5);
  EXPECT_EQ(start.first, 0u);
  EXPECT_EQ(start.last, 10u);
  EXPECT_EQ(start.point_count(), 11u);
  const LocalGrid end = build_local_grid(frames, poses, Extrinsics{}, 25, 10, 0.5);
  EXPECT_EQ(end.first, 15u);
  EXPECT_EQ(end.last, 29u);
  EXPECT_EQ(end.point_count(), 15u);
  const LocalGrid middle = build_local_grid(frames, poses, Extrinsics{}, 15, 10, 0.5);
  EXPECT_EQ(middle.point_count(), 21u);
}

TEST(LocalGrid, MissingPoseIsPrecondition) {
  const std::vector<RadarFrame> frames{frame_with({Vec3::Zero()}), frame_with({Vec3::Zero()})};
  const std::vector<Pose> poses{Pose::identity()};
  EXPECT_EQ(category_of([&] { build_local_grid(frames, poses, Extrinsics{}, 0, 1, 0.5); }),
            ErrorCategory::kPrecondition);
  EXPECT_EQ(category_of([&] { build_local_grid(frames, poses, Extrinsics{}, 5, 1, 0.5); }),
            ErrorCategory::kPrecondition);
}

TEST(LocalGrid, PointsExpressedInCenterRadarFrame) {
  std::mt19937_64 rng(2);
  Extrinsics ext;
  ext.radar_in_body = random_pose(rng, 0.5);
  const Vec3 world_point(3.0, -2.0, 1.0);
  std::vector<RadarFrame> frames;
  std::vector<Pose> poses;
  for (int i = 0; i < 5; ++i) {
    const Pose body = random_pose(rng, 2.0);
    const Pose world_from_radar = body * ext.radar_in_body;
    frames.push_back(frame_with({world_from_radar.inverse() * world_point}, i));
    poses.push_back(body);
  }
  const LocalGrid g = build_local_grid(frames, poses, ext, 2, 2, 0.5);
  const Vec3 expected = (poses[2] * ext.radar_in_body).inverse() * world_point;
  for (const auto& [key, points] : g.cells) {
    for (const Vec3& p : points) EXPECT_LT((p - expected).norm(), 1e-12);
  }
}

TEST(LocalGrid, StoredPointsMapBackToTheirVoxel) {
  std::mt19937_64 rng(3);
  std::vector<RadarFrame> frames;
  std::vector<Pose> poses;
  std::size_t total = 0;
  for (int i = 0; i < 21; ++i) {
    std::vector<Vec3> pts;
    const int n = 50 + i;
    for (int k = 0; k < n; ++k) pts.push_back(random_vec(rng, 8.0));
    total += n;
    frames.push_back(frame_with(pts, i));
    poses.push_back(random_pose(rng, 1.0));
  }
  const LocalGrid g = build_local_grid(frames, poses, Extrinsics{}, 10, 10, 0.3);
  EXPECT_EQ(g.point_count(), total);
  for (const auto& [key, points] : g.cells) {
    for (const Vec3& p : points) EXPECT_EQ(voxel_index(p, 0.3), key);
  }
}

TEST(PointCovariance, TwoPointSampleVariance) {
  const LocalGrid g = grid_of({{0, 0, 0}, {0.2, 0, 0}}, 0.5);
  CovarianceParams params;
  params.min_points = 2;
  const DiagCov3 c = estimate_point_covariance(g, Vec3(0.1, 0.1, 0.1), params);
  EXPECT_FALSE(c.fallback);
  EXPECT_NEAR(c.variances.x(), 0.02, 1e-15);
  EXPECT_EQ(c.variances.y(), 1e-4);
  EXPECT_EQ(c.variances.z(), 1e-4);
}

TEST(PointCovariance, SinglePointFallsBack) {
  const LocalGrid g = grid_of({{0.1, 0.1, 0.1}}, 0.5);
  const DiagCov3 c = estimate_point_covariance(g, Vec3(0.1, 0.1, 0.1));
  EXPECT_TRUE(c.fallback);
  EXPECT_NEAR((c.variances - Vec3::Constant(0.25 / 12.0)).norm(), 0.0, 1e-15);
}

TEST(PointCovariance, EmptyVoxelFallsBack) {
  const LocalGrid g = grid_of({{0.1, 0.1, 0.1}}, 0.5);
  const DiagCov3 c = estimate_point_covariance(g, Vec3(5, 5, 5));
  EXPECT_TRUE(c.fallback);
}

TEST(PointCovariance, IdenticalPointsFloored) {
  const LocalGrid g = grid_of(std::vector<Vec3>(8, Vec3(0.1, 0.2, 0.3)), 0.5);
  const DiagCov3 c = estimate_point_covariance(g, Vec3(0.1, 0.2, 0.3));
  EXPECT_FALSE(c.fallback);
  EXPECT_EQ(c.variances, Vec3::Constant(1e-4));
}

TEST(PointCovariance, PermutationInvariant) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Vec3> pts;
    std::uniform_real_distribution<double> u(0.0, 0.5);
    for (int i = 0; i < 12; ++i) pts.push_back(Vec3(u(rng), u(rng), u(rng)));
    const DiagCov3 a = estimate_point_covariance(grid_of(pts, 0.5), pts[0]);
    std::shuffle(pts.begin(), pts.end(), rng);
    const DiagCov3 b = estimate_point_covariance(grid_of(pts, 0.5), pts[0]);
    EXPECT_NEAR((a.variances - b.variances).norm(), 0.0, 1e-15);
  }
}

TEST(PointCovariance, MatchesDirectSampleVariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < 40; ++i) pts.push_back(Vec3(u(rng), 0.5 * u(rng), 0.1 * u(rng)));
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= pts.size();
  Vec3 var = Vec3::Zero();
  for (const Vec3& p : pts) var += (p - mean).cwiseAbs2();
  var /= pts.size() - 1;
  const DiagCov3 c = estimate_point_covariance(grid_of(pts, 1.0), pts[0]);
  EXPECT_NEAR((c.variances - var.cwiseMax(1e-4)).norm(), 0.0, 1e-14);
}

TEST(WorldCovariance, Examples) {
  DiagCov3 c;
  c.variances = Vec3(1, 2, 3);
  EXPECT_NEAR((world_covariance(Rotation(), c) - Vec3(1, 2, 3).asDiagonal().toDenseMatrix()).norm(),
              0.0, 1e-15);
  const Rotation rz = Rotation::about_axis(Vec3::UnitZ(), std::numbers::pi / 2);
  EXPECT_NEAR((world_covariance(rz, c) - Vec3(2, 1, 3).asDiagonal().toDenseMatrix()).norm(), 0.0,
              1e-12);
  std::mt19937_64 rng(6);
  DiagCov3 iso;
  iso.variances = Vec3::Constant(0.7);
  for (int trial = 0; trial < 20; ++trial) {
    EXPECT_NEAR((world_covariance(random_rotation(rng), iso) - 0.7 * Mat3::Identity()).norm(), 0.0,
                1e-12);
  }
}

TEST(WorldCovariance, EigenvaluesPreservedAndSymmetric) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(1e-4, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    DiagCov3 c;
    c.variances = Vec3(u(rng), u(rng), u(rng));
    const Mat3 w = world_covariance(random_rotation(rng), c);
    EXPECT_LT((w - w.transpose()).norm(), 1e-12);
    Vec3 expected = c.variances;
    std::sort(expected.data(), expected.data() + 3);
    const Vec3 eig = Eigen::SelfAdjointEigenSolver<Mat3>(w).eigenvalues();
    EXPECT_LT((eig - expected).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(FrameCovariances, OnePerPointWithinFloor) {
  std::mt19937_64 rng(8);
  std::vector<RadarFrame> frames;
  std::vector<Pose> poses;
  for (int i = 0; i < 21; ++i) {
    std::vector<Vec3> pts;
    for (int k = 0; k < 60; ++k) pts.push_back(random_vec(rng, 4.0));
    frames.push_back(frame_with(pts, i));
    poses.push_back(Pose::identity());
  }
  const auto covs = estimate_frame_covariances(frames, poses, Extrinsics{}, 10, 10, 0.5);
  ASSERT_EQ(covs.size(), frames[10].points.size());
  for (const DiagCov3& c : covs) {
    EXPECT_TRUE(c.variances.allFinite());
    EXPECT_GE(c.variances.minCoeff(), 1e-4);
  }
}
