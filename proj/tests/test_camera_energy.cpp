#include <gtest/gtest.h>

#include <random>

#include "fixture.hpp"

using namespace metafit;

namespace {

double fd_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / (1.0 + a.cwiseAbs().maxCoeff());
}

Observation noiseless_obs(const KinematicTree& t, const FitParams& p) {
  std::vector<Vec2> kp = project_all(p.camera, forward_kinematics(t, p));
  return Observation::create(kp, Eigen::VectorXd::Ones(t.joint_count()));
}

}  // namespace

TEST(Project, IdentityDropsDepth) {
  const Vec2 u = project(Eigen::Vector3d(1, 0, 0), Vec3(0, 0, 5));
  EXPECT_EQ(u, Vec2(0, 0));
}

TEST(Project, ScaleAndShift) { EXPECT_EQ(project(Eigen::Vector3d(2, 1, -1), Vec3(1, 1, 9)), Vec2(3, 1)); }

TEST(Project, DoublingScaleDoublesSpread) {
  const Vec3 x(0.3, -0.7, 2.0);
  const Vec2 a = project(Eigen::Vector3d(1.5, 0.2, 0.4), x) - Vec2(0.2, 0.4);
  const Vec2 b = project(Eigen::Vector3d(3.0, 0.2, 0.4), x) - Vec2(0.2, 0.4);
  EXPECT_LT((b - 2.0 * a).norm(), 1e-15);
}

TEST(Project, NonpositiveScaleRejected) {
  for (double s : {0.0, -1.0}) {
    try {
      project(Eigen::Vector3d(s, 0, 0), Vec3::Zero());
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidCamera);
    }
  }
}

TEST(ObservationTest, Validation) {
  Eigen::VectorXd w(2);
  w << 0.0, 0.0;
  EXPECT_THROW(Observation::create({{0, 0}, {1, 1}}, w), Error);
  w << 0.5, 1.5;
  EXPECT_THROW(Observation::create({{0, 0}, {1, 1}}, w), Error);
  EXPECT_THROW(Observation::create({{0, 0}}, w), Error);
}

TEST(Energy, MatchesOracle) {
  const auto t = fixture::four_joint_tree();
  const auto terms = energy_terms(t, fixture::params(), fixture::observation(), EnergyConfig{});
  EXPECT_NEAR(terms.total(), 0.287393147092674, 1e-14);
  EXPECT_NEAR(terms.data, 0.14338064709267401, 1e-14);
}

TEST(Energy, NoiselessSelfConsistency) {
  const auto t = default_tree();
  std::mt19937_64 rng(1);
  const FitParams p = fixture::random_params(t, rng);
  EXPECT_LT(energy(t, p, noiseless_obs(t, p), EnergyConfig{0.0, 0.0}), 1e-28);
}

TEST(Energy, ZeroWeightsAndLambdasGiveZero) {
  // Boundary case only reachable by bypassing Observation::create.
  const auto t = fixture::four_joint_tree();
  Observation obs = fixture::observation();
  obs.weights.setZero();
  EXPECT_EQ(energy(t, fixture::params(), obs, EnergyConfig{0.0, 0.0}), 0.0);
}

TEST(Energy, ReverseOrderSumOracle) {
  const auto t = default_tree();
  std::mt19937_64 rng(9);
  const EnergyConfig cfg;
  for (int trial = 0; trial < 10; ++trial) {
    const FitParams p = fixture::random_params(t, rng);
    const Observation obs = fixture::random_observation(24, rng);
    const auto pos = forward_kinematics(t, p);
    double sum = 0.0;
    for (int k = kShapeDim - 1; k >= 0; --k) sum += cfg.lambda_shape * p.beta[k] * p.beta[k];
    for (int k = t.pose_dim() - 1; k >= 3; --k) sum += cfg.lambda_pose * p.theta[k] * p.theta[k];
    for (int j = t.joint_count() - 1; j >= 0; --j) {
      const double dx = p.camera[0] * pos[j].x() + p.camera[1] - obs.keypoints[j].x();
      const double dy = p.camera[0] * pos[j].y() + p.camera[2] - obs.keypoints[j].y();
      sum += obs.weights[j] * (dx * dx + dy * dy);
    }
    EXPECT_NEAR(energy(t, p, obs, cfg), sum, 1e-10 * (1.0 + sum));
  }
}

TEST(Energy, LinearInWeights) {
  const auto t = default_tree();
  std::mt19937_64 rng(10);
  const FitParams p = fixture::random_params(t, rng);
  Observation obs = fixture::random_observation(24, rng);
  obs.weights *= 0.5;
  const double d1 = data_energy(t, p, obs);
  obs.weights *= 2.0;
  EXPECT_NEAR(data_energy(t, p, obs), 2.0 * d1, 1e-14 * d1);
}

TEST(Energy, NonNegativeOnRandomInstances) {
  const auto t = default_tree();
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const FitParams p = fixture::random_params(t, rng, 1.0);
    EXPECT_GE(energy(t, p, fixture::random_observation(24, rng), EnergyConfig{}), 0.0);
  }
}

TEST(Energy, OverflowReported) {
  const auto t = fixture::four_joint_tree();
  FitParams p = fixture::params();
  p.camera[1] = 1e300;
  try {
    energy(t, p, fixture::observation(), EnergyConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NumericOverflow);
  }
}

TEST(Gradient, MatchesAutodiffOracle) {
  const auto t = fixture::four_joint_tree();
  const auto g = energy_gradient_full(t, fixture::params(), fixture::observation(), EnergyConfig{});
  fixture::expect_near_all(g.params,
                           {0.093168438464012626, -0.067744106130319573, 0.50414644386291396, 0.031632344936712332,
                            -0.047915199966518961, 0.033958205902902661, -0.00040000000000000002, 0.001,
                            0.00020000000000000001, 0.0001, -0.00020000000000000001, 0.00040000000000000002,
                            -0.20136145275996092, -0.49149981114634445, -0.59058819366742421},
                           1e-13);
  fixture::expect_near_all(g.beta,
                           {0.01438553872321433, -0.02, 0.0016144612767856701, 0.00438553872321433,
                            0.040000000000000001, -0.018385538723214329, 0.0063855387232143301,
                            0.018000000000000002, -0.054385538723214333, 0.028385538723214331},
                           1e-13);
  EXPECT_NEAR(g.value, 0.287393147092674, 1e-14);
}

TEST(Gradient, ZeroAtNoiselessOptimum) {
  const auto t = default_tree();
  std::mt19937_64 rng(12);
  const FitParams p = fixture::random_params(t, rng);
  const Eigen::VectorXd g = energy_grad_analytic(t, p, noiseless_obs(t, p), EnergyConfig{0.0, 0.0});
  EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Gradient, SingleJointScaleComponent) {
  // The root sits at the origin, so the single contributing joint is a child with the root weight zeroed.
  KinematicTree two({-1, 0}, {Vec3(0, 1, 0), Vec3(0.6, 0.8, 0)}, Eigen::Vector2d(0.0, 1.0),
                    ShapeBasis::Zero(2, kShapeDim));
  FitParams p = FitParams::zeros(2);
  p.camera << 1.4, 0.3, -0.2;
  Eigen::Vector2d w(0.0, 0.7);
  const Observation obs = Observation::create({{0, 0}, {0.5, 0.4}}, w);
  const double x = 0.6, y = 0.8, s = 1.4;
  const double want = 2 * 0.7 * (s * x + 0.3 - 0.5) * x + 2 * 0.7 * (s * y - 0.2 - 0.4) * y;
  EXPECT_NEAR(energy_grad_analytic(two, p, obs, EnergyConfig{})[6], want, 1e-14);
}

TEST(Gradient, FiniteDifferenceConsistency) {
  const auto t = default_tree();
  std::mt19937_64 rng(13);
  const EnergyConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const FitParams p = fixture::random_params(t, rng);
    const Observation obs = fixture::random_observation(24, rng);
    const Eigen::VectorXd a = energy_grad_analytic(t, p, obs, cfg);
    const Eigen::VectorXd fd = central_difference_gradient(energy_on_flat(t, p, obs, cfg), p.flat(), 1e-6);
    EXPECT_LT(fd_error(a, fd), 1e-5);
  }
}

TEST(Stochastic, QuadraticHookIsExact) {
  auto f = [](const Eigen::VectorXd& x) { return x[0] * x[0]; };
  std::mt19937_64 rng(0);
  const Eigen::VectorXd g = stochastic_gradient(f, Eigen::VectorXd::Ones(1), 0.1, PerturbationMode::Coordinate, rng);
  EXPECT_NEAR(g[0], 2.0, 1e-14);
}

TEST(Stochastic, RejectsNonpositiveDelta) {
  const auto t = fixture::four_joint_tree();
  std::mt19937_64 rng(0);
  for (auto mode : {PerturbationMode::Coordinate, PerturbationMode::Simultaneous}) {
    try {
      energy_grad_stochastic(t, fixture::params(), fixture::observation(), EnergyConfig{}, 0.0, mode, rng);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidInput);
    }
  }
}

TEST(Stochastic, CoordinateModeMatchesAnalytic) {
  const auto t = default_tree();
  std::mt19937_64 rng(14);
  const FitParams p = fixture::random_params(t, rng);
  const Observation obs = fixture::random_observation(24, rng);
  const Eigen::VectorXd a = energy_grad_analytic(t, p, obs, EnergyConfig{});
  const Eigen::VectorXd c = energy_grad_stochastic(t, p, obs, EnergyConfig{}, 1e-5, PerturbationMode::Coordinate, rng);
  EXPECT_LT((a - c).norm() / a.norm(), 1e-3);
}

TEST(Stochastic, CoordinateErrorShrinksQuadratically) {
  const auto t = fixture::four_joint_tree();
  const FitParams p = fixture::params();
  const Observation obs = fixture::observation();
  std::mt19937_64 rng(0);
  const Eigen::VectorXd a = energy_grad_analytic(t, p, obs, EnergyConfig{});
  std::vector<double> err;
  for (double d : {1e-2, 1e-3}) {
    err.push_back((energy_grad_stochastic(t, p, obs, EnergyConfig{}, d, PerturbationMode::Coordinate, rng) - a).norm());
  }
  EXPECT_GT(err[0] / err[1], 70.0);
  EXPECT_LT(err[0] / err[1], 130.0);
}

TEST(Stochastic, SimultaneousModeIsUnbiased) {
  const auto t = fixture::four_joint_tree();
  const FitParams p = fixture::params();
  const Observation obs = fixture::observation();
  std::mt19937_64 rng(21);
  const Eigen::VectorXd a = energy_grad_analytic(t, p, obs, EnergyConfig{});
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(a.size());
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    avg += energy_grad_stochastic(t, p, obs, EnergyConfig{}, 1e-4, PerturbationMode::Simultaneous, rng);
  avg /= n;
  // Cross terms give each component variance |g|^2 - g_j^2, so the mean error
  // shrinks like sqrt((d - 1) / n).
  const double rate = std::sqrt(static_cast<double>(a.size() - 1) / n);
  EXPECT_LT((avg - a).norm() / a.norm(), 2.0 * rate);
}
