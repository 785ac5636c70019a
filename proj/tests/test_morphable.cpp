#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "morphloss/errors.hpp"
#include "morphloss/morphable.hpp"
#include "morphloss/rigid.hpp"
#include "test_util.hpp"

using namespace morphloss;
using morphloss::testing::random_points;
using morphloss::testing::random_unit_quaternion;
using morphloss::testing::random_vec3;
using morphloss::testing::small_model;

namespace {

Shape moved(const Shape& s, const Quaternion& q, const Vec3& t) {
  return Shape((quat_to_rotation(q) * s.points()).colwise() + t);
}

}  // namespace

TEST(Synthesize, ZeroAlphaIsMean) {
  const auto& m = small_model();
  const Shape s = synthesize(m, {Eigen::VectorXd::Zero(8)});
  EXPECT_EQ(s.points(), m.mean.points());
}

TEST(Synthesize, Linear) {
  const auto& m = small_model();
  const Eigen::VectorXd e1 = Eigen::VectorXd::Unit(8, 0);
  const Eigen::VectorXd d = synthesize_flat(m, 2 * e1) - synthesize_flat(m, e1);
  EXPECT_LT((d - (synthesize_flat(m, e1) - m.mean.flat())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Synthesize, WrongDimensionThrows) {
  try {
    synthesize(small_model(), {Eigen::VectorXd::Zero(3)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParamDimension);
  }
}

TEST(BuildModel, FiveShapesRoundTripWithFourComponents) {
  Rng rng(1);
  std::vector<Shape> shapes;
  for (int i = 0; i < 5; ++i) shapes.emplace_back(random_points(rng, 12));
  const MorphableModel m = build_model(shapes, 4);
  const Eigen::VectorXd alpha = project_to_basis(m, shapes[3]);
  EXPECT_LT((synthesize_flat(m, alpha) - shapes[3].flat()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(BuildModel, BasisOrthonormalAndEigenvaluesSorted) {
  const auto& m = small_model();
  const Eigen::MatrixXd gram = m.basis.transpose() * m.basis;
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
  for (Eigen::Index i = 0; i + 1 < m.eigenvalues.size(); ++i) EXPECT_GE(m.eigenvalues[i], m.eigenvalues[i + 1]);
  EXPECT_GE(m.eigenvalues.minCoeff(), 0.0);
  EXPECT_NO_THROW(m.validate());
}

TEST(BuildModel, EqualShapesGiveZeroEigenvalues) {
  Rng rng(2);
  const Shape s(random_points(rng, 6));
  const MorphableModel m = build_model({s, s, s, s}, 3);
  EXPECT_EQ(m.eigenvalues, Eigen::VectorXd::Zero(3));
  EXPECT_LT((m.mean.points() - s.points()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.basis.transpose() * m.basis - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildModel, OneDimensionalVariation) {
  Rng rng(3);
  const Shape base(random_points(rng, 5));
  Eigen::VectorXd d = Eigen::VectorXd::Random(15);
  const std::vector<double> coeffs{-2.0, -0.5, 0.3, 1.0, 1.2};
  std::vector<Shape> shapes;
  for (double c : coeffs) shapes.push_back(Shape::from_flat(base.flat() + c * d));
  const MorphableModel m = build_model(shapes, 1);
  EXPECT_NEAR(std::abs(m.basis.col(0).dot(d.normalized())), 1.0, 1e-10);
  double mean = 0, var = 0;
  for (double c : coeffs) mean += c / 5;
  for (double c : coeffs) var += (c - mean) * (c - mean) / 4;
  EXPECT_NEAR(m.eigenvalues[0], var * d.squaredNorm(), 1e-9);
}

TEST(BuildModel, FullRankReconstructsEveryShape) {
  Rng rng(4);
  std::vector<Shape> shapes;
  for (int i = 0; i < 9; ++i) shapes.emplace_back(random_points(rng, 10));
  const MorphableModel m = build_model(shapes, 8);
  for (const auto& s : shapes) {
    EXPECT_LT((synthesize_flat(m, project_to_basis(m, s)) - s.flat()).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(BuildModel, TooManyComponentsIsRankDeficient) {
  Rng rng(5);
  std::vector<Shape> shapes;
  for (int i = 0; i < 4; ++i) shapes.emplace_back(random_points(rng, 10));
  try {
    build_model(shapes, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
}

TEST(Procrustes, RemovesRotation) {
  Rng rng(6);
  const Shape a(random_points(rng, 20));
  const Shape b = moved(a, {std::cos(M_PI / 12), 0, 0, std::sin(M_PI / 12)}, Vec3(1, 2, 3));
  const auto out = procrustes_align({a, b});
  EXPECT_LT((out[0].points() - out[1].points()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Procrustes, OutputsAreCentered) {
  Rng rng(7);
  std::vector<Shape> shapes;
  for (int i = 0; i < 6; ++i) shapes.emplace_back(random_points(rng, 15));
  Vec3 sum = Vec3::Zero();
  for (const auto& s : procrustes_align(shapes)) sum += s.centroid();
  EXPECT_LT(sum.norm(), 1e-10);
}

TEST(Procrustes, EachOutputIsARigidMotionOfItsInput) {
  Rng rng(8);
  std::vector<Shape> shapes;
  for (int i = 0; i < 5; ++i) shapes.emplace_back(random_points(rng, 15));
  const auto out = procrustes_align(shapes);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const RigidTransform t = kabsch(shapes[i].points(), out[i].points());
    EXPECT_LT(rms_distance(t.apply(shapes[i].points()), out[i].points()), 1e-9);
  }
}

TEST(Procrustes, MatchesKabschOracleUnderNoise) {
  Rng rng(9);
  const Shape base(random_points(rng, 40));
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<Shape> shapes;
  for (int i = 0; i < 10; ++i) {
    Points3 p = moved(base, random_unit_quaternion(rng), random_vec3(rng, 5)).points();
    for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] += noise(rng);
    shapes.emplace_back(p);
  }
  const auto out = procrustes_align(shapes);
  Points3 mean = Points3::Zero(3, 40);
  for (const auto& s : out) mean += s.points() / 10.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_LE(rms_distance(out[i].points(), mean), 0.02);
    // Kabsch of the input onto the consensus gives the same placement.
    const RigidTransform t = kabsch(shapes[i].points(), mean);
    EXPECT_LT(rms_distance(t.apply(shapes[i].points()), out[i].points()), 1e-6);
  }
}

TEST(SampleParams, ZeroEigenvaluesGiveZero) {
  MorphableModel m = small_model();
  m.eigenvalues.setZero();
  Rng rng(1);
  EXPECT_EQ(sample_params(m, rng).alpha, Eigen::VectorXd::Zero(8));
}

TEST(SampleParams, DeterministicUnderSeed) {
  Rng a(3), b(3);
  EXPECT_EQ(sample_params(small_model(), a).alpha, sample_params(small_model(), b).alpha);
}

TEST(SampleParams, VarianceMatchesEigenvalue) {
  MorphableModel m = small_model();
  m.eigenvalues.setOnes();
  m.eigenvalues[0] = 4.0;
  Rng rng(12);
  double sum = 0, sq = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double a = sample_params(m, rng).alpha[0];
    sum += a;
    sq += a * a;
  }
  const double var = (sq - sum * sum / n) / (n - 1);
  EXPECT_GE(var, 3.6);
  EXPECT_LE(var, 4.4);
}

TEST(SyntheticModel, TwentyNonIncreasingEigenvalues) {
  const MorphableModel m = build_synthetic_model(128, 20, 42, 60);
  ASSERT_EQ(m.n_components(), 20u);
  for (Eigen::Index i = 0; i + 1 < 20; ++i) EXPECT_GE(m.eigenvalues[i], m.eigenvalues[i + 1]);
  EXPECT_GT(m.eigenvalues[19], 0.0);
}

TEST(SyntheticModel, MirrorClosed) {
  const auto& m = small_model();
  const Eigen::Index n = static_cast<Eigen::Index>(m.n_points());
  Points3 mirrored = m.mean.points();
  for (const auto& [a, b] : m.symmetry_pairs) {
    mirrored.col(a) = m.mean.points().col(b);
    mirrored.col(b) = m.mean.points().col(a);
  }
  mirrored.row(0) *= -1;
  EXPECT_LT((mirrored - m.mean.points()).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(static_cast<Eigen::Index>(m.symmetry_pairs.size() * 2), n);
}

TEST(SyntheticModel, HashIsStableAndSensitive) {
  MorphableModel m = small_model();
  const auto h = model_hash(m);
  EXPECT_EQ(h, model_hash(build_synthetic_model(64, 8, 42, 60)));
  m.eigenvalues[0] += 1e-9;
  EXPECT_NE(h, model_hash(m));
}
