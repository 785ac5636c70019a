#include <cmath>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "morphloss/errors.hpp"
#include "morphloss/geometry.hpp"
#include "test_util.hpp"

using namespace morphloss;
using morphloss::testing::random_points;
using morphloss::testing::random_unit_quaternion;
using morphloss::testing::random_vec3;

namespace {

const double kS = std::sqrt(0.5);

Shape single_point(const Vec3& p) {
  Points3 pts(3, 1);
  pts.col(0) = p;
  return Shape(pts);
}

}  // namespace

TEST(QuatNormalize, UnitInputIsUnchanged) {
  const auto n = quat_normalize(Vec4(1, 0, 0, 0));
  EXPECT_EQ(n.q.vec(), Vec4(1, 0, 0, 0));
  Mat4 expected = Mat4::Identity();
  expected(0, 0) = 0.0;
  EXPECT_TRUE(n.jacobian.isApprox(expected, 1e-15));
}

TEST(QuatNormalize, PureScaling) {
  EXPECT_EQ(quat_normalize(Vec4(2, 0, 0, 0)).q.vec(), Vec4(1, 0, 0, 0));
}

TEST(QuatNormalize, JacobianMatchesFiniteDifferences) {
  const Vec4 raw(1, 1, 0, 0);
  const auto n = quat_normalize(raw);
  EXPECT_NEAR(n.q.w, kS, 1e-15);
  EXPECT_NEAR(n.q.x, kS, 1e-15);
  const double h = 1e-6;
  for (int k = 0; k < 4; ++k) {
    Vec4 dp = raw, dm = raw;
    dp[k] += h;
    dm[k] -= h;
    const Vec4 fd = (quat_normalize(dp).q.vec() - quat_normalize(dm).q.vec()) / (2 * h);
    EXPECT_LT((fd - n.jacobian.col(k)).cwiseAbs().maxCoeff(), 1e-6) << "column " << k;
  }
}

TEST(QuatNormalize, RandomJacobiansMatchFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec4 raw = random_unit_quaternion(rng).vec() * (0.2 + trial * 0.1);
    const auto n = quat_normalize(raw);
    EXPECT_NEAR(n.q.squared_norm(), 1.0, 1e-12);
    EXPECT_TRUE(n.jacobian.isApprox(n.jacobian.transpose(), 1e-14));
    const double h = 1e-6;
    for (int k = 0; k < 4; ++k) {
      Vec4 dp = raw, dm = raw;
      dp[k] += h;
      dm[k] -= h;
      const Vec4 fd = (quat_normalize(dp).q.vec() - quat_normalize(dm).q.vec()) / (2 * h);
      EXPECT_LT((fd - n.jacobian.col(k)).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(QuatNormalize, ZeroIsRejected) {
  try {
    quat_normalize(Vec4::Zero());
    FAIL() << "expected DegenerateQuaternion";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateQuaternion);
  }
}

TEST(QuatToRotation, Identity) { EXPECT_EQ(quat_to_rotation(Quaternion::identity()), Mat3::Identity()); }

TEST(QuatToRotation, NinetyDegreesAboutZ) {
  const Mat3 r = quat_to_rotation({kS, 0, 0, kS});
  EXPECT_LT((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm(), 1e-15);
}

TEST(QuatToRotation, RandomRotationsAreOrthonormal) {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const Mat3 r = quat_to_rotation(random_unit_quaternion(rng));
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(QuatToRotation, NonUnitIsRejected) {
  try {
    quat_to_rotation({2, 0, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotNormalized);
  }
}

TEST(QuatToRotation, RoundTripThroughMatrix) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Quaternion q = random_unit_quaternion(rng);
    const Quaternion back = rotation_to_quat(quat_to_rotation(q));
    EXPECT_NEAR(std::abs(back.dot(q)), 1.0, 1e-12);
    EXPECT_GE(back.w, 0.0);
  }
}

TEST(QuatToRotation, GradientContractionMatchesFiniteDifferences) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Quaternion q = random_unit_quaternion(rng);
    Mat3 g = Mat3::Random();
    const Vec4 analytic = rotation_grad_to_quat(q, g);
    const auto partials = rotation_partials(q);
    for (int k = 0; k < 4; ++k) {
      EXPECT_NEAR(analytic[k], (g.array() * partials[static_cast<std::size_t>(k)].array()).sum(), 1e-12);
    }
  }
}

TEST(PoseApply, IdentityLeavesShape) {
  Rng rng(1);
  const Shape s(random_points(rng, 10));
  const CameraPose pose(Quaternion::identity(), Vec3::Zero());
  EXPECT_EQ(pose_apply(pose, s).points(), s.points());
}

TEST(PoseApply, PureTranslation) {
  const CameraPose pose(Quaternion::identity(), Vec3(0, 0, -60));
  EXPECT_EQ(pose_apply(pose, single_point(Vec3::Zero())).point(0), Vec3(0, 0, -60));
}

TEST(PoseApply, RotationThenTranslation) {
  const CameraPose pose({kS, 0, 0, kS}, Vec3(1, 0, 0));
  EXPECT_LT((pose_apply(pose, single_point(Vec3(1, 0, 0))).point(0) - Vec3(1, 1, 0)).norm(), 1e-15);
}

TEST(CameraPose, RejectsNonUnit) {
  EXPECT_THROW(CameraPose(Quaternion{0.5, 0, 0, 0}, Vec3::Zero()), Error);
}

TEST(Project, OriginProjectsToPrincipalPoint) {
  const Calibration K;
  const CameraPose pose(Quaternion::identity(), Vec3(0, 0, -60));
  const Points2 uv = project(K, pose, single_point(Vec3::Zero()));
  EXPECT_DOUBLE_EQ(uv(0, 0), 112.0);
  EXPECT_DOUBLE_EQ(uv(1, 0), 112.0);
}

TEST(Project, HandEvaluatedOffset) {
  const Calibration K;
  const CameraPose pose(Quaternion::identity(), Vec3(0, 0, -60));
  const Points2 uv = project(K, pose, single_point(Vec3(6, 0, 0)));
  EXPECT_NEAR(uv(0, 0), 62.0, 1e-12);
  EXPECT_NEAR(uv(1, 0), 112.0, 1e-12);
}

TEST(Project, ZeroDepthThrows) {
  const CameraPose pose(Quaternion::identity(), Vec3::Zero());
  try {
    project(Calibration{}, pose, single_point(Vec3(1, 2, 0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BehindImagePlane);
  }
}

TEST(Project, MatchesCameraPointProjection) {
  Rng rng(2);
  const Calibration K;
  for (int trial = 0; trial < 20; ++trial) {
    const CameraPose pose(random_unit_quaternion(rng), Vec3(0, 0, -60) + random_vec3(rng));
    const Shape s(random_points(rng, 20));
    const Points2 a = project(K, pose, s);
    const Points3 cam = pose_apply(pose, s).points();
    for (Eigen::Index i = 0; i < cam.cols(); ++i) {
      const Vec3 h = K.matrix() * cam.col(i);
      EXPECT_NEAR(a(0, i), h.x() / h.z(), 1e-10);
      EXPECT_NEAR(a(1, i), h.y() / h.z(), 1e-10);
    }
    EXPECT_TRUE(project_camera_points(K, cam).isApprox(a, 1e-14));
  }
}

TEST(Calibration, Validation) {
  Calibration K;
  EXPECT_NO_THROW(K.validate());
  K.fx = 0;
  EXPECT_THROW(K.validate(), Error);
  K = Calibration{};
  K.cx = 300;
  EXPECT_THROW(K.validate(), Error);
}

TEST(PoseRelative, ExactPoseGivesIdentity) {
  Rng rng(4);
  const CameraPose p(random_unit_quaternion(rng), random_vec3(rng, 10));
  EXPECT_LT((pose_relative(p, p) - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PoseRelative, TranslationOnly) {
  const CameraPose gt(Quaternion::identity(), Vec3(0, 0, -60));
  const CameraPose pred(Quaternion::identity(), Vec3(0, 0, -50));
  Mat4 expected = Mat4::Identity();
  expected(2, 3) = -10;
  EXPECT_LT((pose_relative(gt, pred) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PoseRelative, ComposesToGroundTruth) {
  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const CameraPose gt(random_unit_quaternion(rng), random_vec3(rng, 30));
    const CameraPose pred(random_unit_quaternion(rng), random_vec3(rng, 30));
    const Mat4 lhs = pose_relative(gt, pred) * pred.homogeneous();
    EXPECT_LT((lhs - gt.homogeneous()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(PoseInverse, ClosedFormMatchesNumericInverse) {
  Rng rng(8);
  const CameraPose p(random_unit_quaternion(rng), random_vec3(rng, 30));
  EXPECT_TRUE(p.inverse_homogeneous().isApprox(p.homogeneous().inverse(), 1e-12));
}

TEST(Euler, RoundTrip) {
  Rng rng(10);
  std::uniform_real_distribution<double> yaw(-89, 89), small(-40, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const EulerAngles a{yaw(rng), small(rng), small(rng)};
    const EulerAngles b = euler_from_rotation(rotation_from_euler(a));
    EXPECT_NEAR(a.yaw, b.yaw, 1e-9);
    EXPECT_NEAR(a.pitch, b.pitch, 1e-9);
    EXPECT_NEAR(a.roll, b.roll, 1e-9);
  }
}

TEST(Shape, FlatLayoutIsPointMajor) {
  Points3 p(3, 2);
  p << 1, 4, 2, 5, 3, 6;
  const Shape s(p);
  Eigen::VectorXd expected(6);
  expected << 1, 2, 3, 4, 5, 6;
  EXPECT_EQ(s.flat(), expected);
  EXPECT_EQ(Shape::from_flat(expected).points(), p);
}

TEST(Shape, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(Shape(Points3(3, 0)), Error);
  Points3 p = Points3::Zero(3, 2);
  p(1, 1) = std::nan("");
  EXPECT_THROW(Shape{p}, Error);
}
