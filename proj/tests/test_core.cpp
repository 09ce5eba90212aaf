#include <gtest/gtest.h>

#include <limits>
#include <numbers>
#include <set>
#include <string>

#include "ramba/core.hpp"
#include "ramba/error.hpp"
#include "test_support.hpp"

using namespace ramba;
using ramba::testing::random_pose;
using ramba::testing::random_rotation;
using ramba::testing::random_state;
using ramba::testing::random_vec;

namespace {

constexpr double kPi = std::numbers::pi;

KeyframeState state_at(const Pose& pose) {
  KeyframeState s;
  s.pose = pose;
  return s;
}

}  // namespace

TEST(TransformRadarPoint, IdentityStateAndExtrinsics) {
  const Vec3 p = transform_radar_point(KeyframeState{}, Extrinsics{}, Vec3(1, 2, 3));
  EXPECT_TRUE(p.isApprox(Vec3(1, 2, 3), 1e-15));
}

TEST(TransformRadarPoint, ExtrinsicTranslation) {
  Extrinsics ext;
  ext.radar_in_body.translation = Vec3(0, 0, 0.5);
  const Vec3 p = transform_radar_point(KeyframeState{}, ext, Vec3(1, 0, 0));
  EXPECT_NEAR((p - Vec3(1, 0, 0.5)).norm(), 0.0, 1e-15);
}

TEST(TransformRadarPoint, QuarterTurnAboutZ) {
  const KeyframeState s = state_at(Pose(Rotation::about_axis(Vec3::UnitZ(), kPi / 2), Vec3(1, 0, 0)));
  const Vec3 p = transform_radar_point(s, Extrinsics{}, Vec3(1, 0, 0));
  EXPECT_NEAR((p - Vec3(1, 1, 0)).norm(), 0.0, 1e-12);
}

TEST(TransformRadarPoint, ComposesBodyAndExtrinsics) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const KeyframeState s = random_state(rng);
    Extrinsics ext;
    ext.radar_in_body = random_pose(rng, 0.5);
    const Vec3 p = random_vec(rng, 10.0);
    const Vec3 expected =
        s.pose.rotation.matrix() * (ext.radar_in_body.rotation.matrix() * p +
                                    ext.radar_in_body.translation) +
        s.pose.translation;
    EXPECT_NEAR((transform_radar_point(s, ext, p) - expected).norm(), 0.0, 1e-12);
  }
}

TEST(TransformRadarPoint, RejectsNonFinite) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  try {
    transform_radar_point(KeyframeState{}, Extrinsics{}, Vec3(nan, 0, 0));
    FAIL() << "expected an exception";
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kInvalidArgument);
  }
  KeyframeState bad;
  bad.pose.translation.x() = std::numeric_limits<double>::infinity();
  EXPECT_THROW(transform_radar_point(bad, Extrinsics{}, Vec3::Zero()), Error);
}

TEST(TransformRadarPoint, IsAnIsometry) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const KeyframeState s = random_state(rng);
    Extrinsics ext;
    ext.radar_in_body = random_pose(rng, 0.5);
    const Vec3 a = random_vec(rng, 20.0);
    const Vec3 b = random_vec(rng, 20.0);
    const double d =
        (transform_radar_point(s, ext, a) - transform_radar_point(s, ext, b)).norm();
    EXPECT_NEAR(d, (a - b).norm(), 1e-9);
  }
}

TEST(Retract, ZeroDeltaIsBitIdentical) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const KeyframeState s = random_state(rng);
    const KeyframeState r = retract(s, Tangent::Zero());
    EXPECT_EQ(r.pose.translation, s.pose.translation);
    EXPECT_EQ(r.velocity_w, s.velocity_w);
    EXPECT_EQ(r.bias_gyro, s.bias_gyro);
    EXPECT_EQ(r.bias_accel, s.bias_accel);
    EXPECT_EQ(r.pose.rotation.quaternion().coeffs(), s.pose.rotation.quaternion().coeffs());
  }
}

TEST(Retract, RotationDeltaIsAxisAngle) {
  Tangent d = Tangent::Zero();
  d.segment<3>(tangent::kRot) = Vec3(0, 0, kPi / 2);
  const KeyframeState r = retract(KeyframeState{}, d);
  EXPECT_NEAR((r.pose.rotation.matrix() * Vec3::UnitX() - Vec3::UnitY()).norm(), 0.0, 1e-12);
}

TEST(Retract, TranslationIsAdditive) {
  Tangent d = Tangent::Zero();
  d.segment<3>(tangent::kTrans) = Vec3(1, 1, 1);
  const KeyframeState r = retract(retract(KeyframeState{}, d), d);
  EXPECT_NEAR((r.pose.translation - Vec3(2, 2, 2)).norm(), 0.0, 1e-15);
}

TEST(Retract, RotationComposesOnTheLeft) {
  std::mt19937_64 rng(8);
  const KeyframeState s = random_state(rng);
  Tangent d = Tangent::Zero();
  d.segment<3>(tangent::kRot) = Vec3(0.1, -0.2, 0.3);
  const Mat3 expected = Rotation::exp(Vec3(0.1, -0.2, 0.3)).matrix() * s.pose.rotation.matrix();
  EXPECT_NEAR((retract(s, d).pose.rotation.matrix() - expected).norm(), 0.0, 1e-12);
}

TEST(Retract, LocalDifferenceRoundTrip) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const KeyframeState s = random_state(rng);
    Tangent d;
    for (int i = 0; i < tangent::kDim; ++i) d[i] = u(rng);
    d *= 0.49 / d.norm() * std::abs(u(rng));
    const Tangent back = local_difference(s, retract(s, d));
    EXPECT_LT((back - d).norm(), 1e-9);
  }
}

TEST(Between, IdentityCases) {
  std::mt19937_64 rng(10);
  const Pose p = random_pose(rng);
  const PoseError same = pose_error(between(p, p), Pose::identity());
  EXPECT_LT(same.rotation, 1e-12);
  EXPECT_LT(same.translation, 1e-12);
  const PoseError from_identity = pose_error(between(Pose::identity(), p), p);
  EXPECT_LT(from_identity.rotation, 1e-12);
  EXPECT_LT(from_identity.translation, 1e-12);
}

TEST(Between, CommutingTranslations) {
  const Pose b = between(Pose::from_translation(Vec3(1, 0, 0)), Pose::from_translation(Vec3(3, 0, 0)));
  EXPECT_NEAR((b.translation - Vec3(2, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_LT(b.rotation.angle(), 1e-15);
}

TEST(Between, ComposeRecovers) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose a = random_pose(rng);
    const Pose b = random_pose(rng);
    const PoseError e = pose_error(compose(a, between(a, b)), b);
    EXPECT_LT(e.rotation, 1e-9);
    EXPECT_LT(e.translation, 1e-9);
  }
}

TEST(Pose, CompositionIsAssociative) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose a = random_pose(rng, 1.0);
    const Pose b = random_pose(rng, 1.0);
    const Pose c = random_pose(rng, 1.0);
    const PoseError e = pose_error((a * b) * c, a * (b * c));
    EXPECT_LT(e.rotation, 1e-12);
    EXPECT_LT(e.translation, 1e-12);
  }
}

TEST(Pose, ComposeWithInverseIsIdentity) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Pose p = random_pose(rng);
    const PoseError e = pose_error(compose(p, inverse(p)), Pose::identity());
    EXPECT_LT(e.rotation, 1e-9);
    EXPECT_LT(e.translation, 1e-9);
  }
}

TEST(Rotation, LogExpRoundTrip) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> angle(1e-6, kPi - 0.1);
  for (int trial = 0; trial < 500; ++trial) {
    Vec3 w = random_vec(rng, 1.0);
    w *= angle(rng) / w.norm();
    EXPECT_LT((Rotation::exp(w).log() - w).norm(), 1e-9);
  }
}

TEST(Rotation, StaysOrthonormalUnderLongProducts) {
  std::mt19937_64 rng(15);
  Rotation r;
  for (int i = 0; i < 10000; ++i) {
    r = r * random_rotation(rng, 0.5);
    ASSERT_NEAR(r.quaternion().norm(), 1.0, 1e-9);
  }
  const Mat3 m = r.matrix();
  EXPECT_LT((m.transpose() * m - Mat3::Identity()).norm(), 1e-9);
  EXPECT_NEAR(m.determinant(), 1.0, 1e-9);
}

TEST(Rotation, SmallAngleLog) {
  const Vec3 w(1e-12, -2e-12, 3e-12);
  EXPECT_LT((Rotation::exp(w).log() - w).norm(), 1e-20);
  EXPECT_EQ(Rotation().log(), Vec3::Zero());
}

TEST(So3, JacobiansMatchFiniteDifferences) {
  // Exp(w + dw) ~= Exp(w) Exp(Jr(w) dw) and Exp(Jl(w) dw) Exp(w).
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    Vec3 w = random_vec(rng, 1.0);
    w *= 2.5 * std::abs(random_vec(rng, 1.0).x()) / w.norm();
    const Rotation R = Rotation::exp(w);
    Mat3 jr;
    Mat3 jl;
    const double h = 1e-6;
    for (int i = 0; i < 3; ++i) {
      Vec3 d = Vec3::Zero();
      d[i] = h;
      jr.col(i) = ((R.inverse() * Rotation::exp(w + d)).log() -
                   (R.inverse() * Rotation::exp(w - d)).log()) / (2 * h);
      jl.col(i) = ((Rotation::exp(w + d) * R.inverse()).log() -
                   (Rotation::exp(w - d) * R.inverse()).log()) / (2 * h);
    }
    EXPECT_LT((so3::right_jacobian(w) - jr).norm(), 1e-7);
    EXPECT_LT((so3::left_jacobian(w) - jl).norm(), 1e-7);
    EXPECT_LT((so3::right_jacobian(w) * so3::right_jacobian_inverse(w) - Mat3::Identity()).norm(),
              1e-9);
    EXPECT_LT((so3::left_jacobian(w) * so3::left_jacobian_inverse(w) - Mat3::Identity()).norm(),
              1e-9);
  }
}

TEST(ErrorCategory, DistinctExitCodes) {
  const ErrorCategory all[] = {ErrorCategory::kInvalidArgument, ErrorCategory::kPrecondition,
                               ErrorCategory::kData,            ErrorCategory::kIo,
                               ErrorCategory::kStructural,      ErrorCategory::kNumerical};
  std::set<int> codes;
  std::set<std::string> names;
  for (auto c : all) {
    EXPECT_NE(exit_code(c), 0);
    codes.insert(exit_code(c));
    names.insert(to_string(c));
  }
  EXPECT_EQ(codes.size(), 6u);
  EXPECT_EQ(names.size(), 6u);
}
