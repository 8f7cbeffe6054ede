#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fixture.hpp"

using namespace metafit;

namespace {

Mat3 series_exp(const Vec3& v) {
  // Truncated power series of exp(skew(v)); independent of the closed form.
  const Mat3 k = skew(v);
  Mat3 term = Mat3::Identity();
  Mat3 sum = Mat3::Identity();
  for (int n = 1; n < 40; ++n) {
    term = term * k / n;
    sum += term;
  }
  return sum;
}

}  // namespace

TEST(Rodrigues, ZeroIsIdentity) { EXPECT_TRUE(rodrigues(Vec3::Zero()).isApprox(Mat3::Identity(), 0.0)); }

TEST(Rodrigues, QuarterTurnAboutZ) {
  const Vec3 y = rodrigues(Vec3(0, 0, std::numbers::pi / 2)) * Vec3(1, 0, 0);
  EXPECT_NEAR(y.x(), 0.0, 1e-15);
  EXPECT_NEAR(y.y(), 1.0, 1e-15);
  EXPECT_NEAR(y.z(), 0.0, 1e-15);
}

TEST(Rodrigues, MatchesMatrixExponentialOracle) {
  const std::vector<double> want = {0.85953389855866313, -0.49799153700292204, -0.11491695393636675,
                                    0.43986763295823095, 0.83531560520670856,  -0.32979433769225508,
                                    0.26022671404809444, 0.2329211642844366,   0.93703243728491803};
  const Mat3 r = rodrigues(Vec3(0.3, -0.2, 0.5));
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(r(i / 3, i % 3), want[static_cast<std::size_t>(i)], 1e-14);
}

TEST(Rodrigues, RandomVectorsAreProperRotations) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const Mat3 r = rodrigues(v);
    EXPECT_LT((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
    EXPECT_LT((r - series_exp(v)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rodrigues, ContinuousNearZero) {
  for (double a : {1e-5, 1e-8, 1e-9, 1e-12}) {
    const Vec3 v = a * Vec3(0.6, -0.8, 0.0);
    EXPECT_LT((rodrigues(v) - series_exp(v)).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Rodrigues, RejectsNonFinite) {
  try {
    rodrigues(Vec3(NAN, 0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}

TEST(Tree, RejectsCollapsibleBones) {
  auto t = fixture::four_joint_tree();
  ShapeBasis b = t.shape_basis();
  b(2, 0) = 0.2;  // 3 * sum |B| exceeds the 0.3 base length
  try {
    KinematicTree(t.parent(), t.rest_offset(), t.base_length(), b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateShape);
  }
}

TEST(Tree, RejectsBadTopologyAndOffsets) {
  auto t = fixture::four_joint_tree();
  EXPECT_THROW(KinematicTree({-1, 2, 1, 1}, t.rest_offset(), t.base_length(), t.shape_basis()), Error);
  auto offsets = t.rest_offset();
  offsets[1] = Vec3(0, 2, 0);
  EXPECT_THROW(KinematicTree(t.parent(), offsets, t.base_length(), t.shape_basis()), Error);
}

TEST(Tree, DefaultTreeShape) {
  const auto t = default_tree();
  EXPECT_EQ(t.joint_count(), 24);
  EXPECT_EQ(t.param_dim(), 75);
  EXPECT_EQ(default_joint_names().size(), 24u);
  const auto again = default_tree();
  EXPECT_EQ(t.shape_basis(), again.shape_basis());
}

TEST(Tree, JsonRoundTrip) {
  const auto t = default_tree();
  const auto back = tree_from_json(nlohmann::json::parse(to_json(t).dump()));
  EXPECT_EQ(back.parent(), t.parent());
  EXPECT_EQ(back.base_length(), t.base_length());
  EXPECT_EQ(back.shape_basis(), t.shape_basis());
  for (int j = 0; j < t.joint_count(); ++j) EXPECT_EQ(back.rest_offset()[j], t.rest_offset()[j]);
}

TEST(BoneLengths, ZeroBetaGivesBase) {
  const auto t = default_tree();
  EXPECT_EQ(bone_lengths(t, Eigen::VectorXd::Zero(kShapeDim)), t.base_length());
}

TEST(BoneLengths, ZeroBasisIgnoresBeta) {
  auto t = fixture::four_joint_tree();
  KinematicTree flat(t.parent(), t.rest_offset(), t.base_length(), ShapeBasis::Zero(4, kShapeDim));
  EXPECT_EQ(bone_lengths(flat, fixture::params().beta), t.base_length());
}

TEST(BoneLengths, MatchesOracle) {
  const auto t = fixture::four_joint_tree();
  const Eigen::VectorXd l = bone_lengths(t, fixture::params().beta);
  fixture::expect_near_all(l, {-0.0094000000000000004, 0.48120000000000002, 0.27179999999999999, 0.3624}, 1e-15);
}

TEST(BoneLengths, NonpositiveLengthIsDegenerate) {
  auto t = fixture::four_joint_tree();
  // A tree built without the beta-box guarantee can still be asked about an out-of-box beta.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(kShapeDim);
  beta[0] = 1000.0;
  try {
    bone_lengths(t, beta);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateShape);
  }
}

TEST(ForwardKinematics, RestPose) {
  const auto t = default_tree();
  const auto p = forward_kinematics(t, FitParams::zeros(24));
  EXPECT_EQ(p[0], Vec3::Zero());
  for (int j = 1; j < 24; ++j) {
    const Vec3 want = p[t.parent()[j]] + t.base_length()[j] * t.rest_offset()[j];
    EXPECT_LT((p[j] - want).norm(), 1e-15);
  }
}

TEST(ForwardKinematics, HalfTurnReflectsChild) {
  KinematicTree chain({-1, 0}, {Vec3(0, 1, 0), Vec3(1, 0, 0)}, Eigen::Vector2d(0.0, 0.7),
                      ShapeBasis::Zero(2, kShapeDim));
  FitParams p = FitParams::zeros(2);
  p.theta.head<3>() = Vec3(0, 0, std::numbers::pi);
  const auto pos = forward_kinematics(chain, p);
  EXPECT_LT((pos[1] - Vec3(-0.7, 0, 0)).norm(), 1e-15);
}

TEST(ForwardKinematics, MatchesOracle) {
  const auto pos = forward_kinematics(fixture::four_joint_tree(), fixture::params());
  const std::vector<double> want = {0, 0, 0, -0.14577122168934895, 0.45741939333641118, 0.032736669454057135,
                                    0.037501335120100537, 0.63209932451694284, 0.13159683111330089,
                                    -0.15865737090610202, 0.50714854034542889, 0.39147713148213548};
  for (int j = 0; j < 4; ++j)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(pos[j][c], want[static_cast<std::size_t>(3 * j + c)], 1e-14);
}

TEST(ForwardKinematics, MatchesNaiveMatrixChain) {
  const auto t = default_tree();
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const FitParams p = fixture::random_params(t, rng);
    const auto pos = forward_kinematics(t, p);
    const Eigen::VectorXd len = t.base_length() + t.shape_basis() * p.beta;
    for (int j = 1; j < t.joint_count(); ++j) {
      // Walk the ancestors explicitly for every joint.
      std::vector<int> path;
      for (int a = t.parent()[j]; a >= 0; a = t.parent()[a]) path.push_back(a);
      Mat3 g = Mat3::Identity();
      for (auto it = path.rbegin(); it != path.rend(); ++it) g = g * series_exp(p.joint_rotation(*it));
      const Vec3 want = pos[t.parent()[j]] + g * (len[j] * t.rest_offset()[j]);
      EXPECT_LT((pos[j] - want).norm(), 1e-10);
    }
  }
}

TEST(ForwardKinematics, CameraNeverMovesJoints) {
  const auto t = default_tree();
  std::mt19937_64 rng(2);
  FitParams p = fixture::random_params(t, rng);
  const auto a = forward_kinematics(t, p);
  p.camera << 3.0, -5.0, 7.0;
  EXPECT_EQ(forward_kinematics(t, p), a);
}

TEST(ForwardKinematics, ZeroRotationLeafLeavesOthersUnchanged) {
  const auto t = default_tree();
  std::mt19937_64 rng(3);
  const FitParams p = fixture::random_params(t, rng);
  const auto base = forward_kinematics(t, p);
  for (int leaf = 0; leaf < t.joint_count(); ++leaf) {
    if (!t.is_leaf(leaf)) continue;
    const auto bigger = t.with_leaf(leaf, Vec3(0.3, 0.1, 0.9), 0.1);
    FitParams q = p;
    q.theta.conservativeResize(q.theta.size() + 3);
    q.theta.tail<3>().setZero();
    const auto pos = forward_kinematics(bigger, q);
    for (int j = 0; j < t.joint_count(); ++j) EXPECT_EQ(pos[j], base[j]);
  }
}

TEST(ForwardKinematics, LipschitzInTheta) {
  const auto t = default_tree();
  std::mt19937_64 rng(4);
  const FitParams p = fixture::random_params(t, rng);
  const auto base = forward_kinematics(t, p);
  const double h = 1e-6;
  for (int k = 0; k < t.pose_dim(); ++k) {
    FitParams q = p;
    q.theta[k] += h;
    const auto pos = forward_kinematics(t, q);
    for (int j = 0; j < t.joint_count(); ++j) EXPECT_LT((pos[j] - base[j]).norm() / h, 10.0);
  }
}

TEST(ForwardKinematics, DimensionMismatch) {
  try {
    forward_kinematics(default_tree(), FitParams::zeros(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
  }
}
