#pragma once

// Small four-joint tree shared by the unit tests; reference values computed by
// tests/oracle/generate_values.py.

#include <cmath>
#include <random>
#include <vector>

#include "metafit/metafit.hpp"

namespace fixture {

inline metafit::KinematicTree four_joint_tree() {
  using metafit::Vec3;
  std::vector<Vec3> offsets = {Vec3(0, 1, 0), Vec3(0, 1, 0), Vec3(1, 1, 0).normalized(), Vec3(0, 0.6, 0.8)};
  Eigen::VectorXd base(4);
  base << 0.0, 0.5, 0.3, 0.4;
  metafit::ShapeBasis basis(4, metafit::kShapeDim);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < metafit::kShapeDim; ++k) basis(j, k) = 0.002 * (j + 1) * ((k % 3) - 1);
  return metafit::KinematicTree({-1, 0, 1, 1}, offsets, base, basis);
}

inline metafit::FitParams params() {
  metafit::FitParams p = metafit::FitParams::zeros(4);
  p.theta << 0.1, -0.2, 0.3, 0.4, 0.1, -0.3, -0.2, 0.5, 0.1, 0.05, -0.1, 0.2;
  p.beta << 0.5, -1, 0.3, 0, 2, -0.7, 0.1, 0.9, -2.5, 1.2;
  p.camera << 1.3, 0.2, -0.1;
  return p;
}

inline metafit::FitParams gt_params() {
  metafit::FitParams p = metafit::FitParams::zeros(4);
  p.theta << 0.0, 0.1, 0.2, 0.3, 0.0, -0.1, 0.1, 0.2, 0.3, -0.2, 0.0, 0.1;
  p.beta << 0.2, 0.0, -0.5, 0.1, 0.0, 0.3, 0.0, -0.2, 0.4, 0.0;
  return p;
}

inline metafit::Observation observation() {
  Eigen::VectorXd w(4);
  w << 1.0, 0.5, 0.8, 0.0;
  return metafit::Observation::create({{0.1, 0.0}, {0.3, 0.6}, {0.5, 0.9}, {0.0, 1.0}}, w);
}

inline metafit::FitParams random_params(const metafit::KinematicTree& tree, std::mt19937_64& rng, double spread = 0.4) {
  std::normal_distribution<double> n(0.0, 1.0);
  metafit::FitParams p = metafit::FitParams::zeros(tree.joint_count());
  for (int k = 0; k < p.theta.size(); ++k) p.theta[k] = spread * n(rng);
  for (int k = 0; k < p.beta.size(); ++k) p.beta[k] = std::clamp(n(rng), -3.0, 3.0);
  p.camera << 1.0 + 0.2 * n(rng), 0.1 * n(rng), 0.1 * n(rng);
  return p;
}

inline metafit::Observation random_observation(int joints, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<metafit::Vec2> kp(static_cast<std::size_t>(joints));
  Eigen::VectorXd w(joints);
  for (int j = 0; j < joints; ++j) {
    kp[static_cast<std::size_t>(j)] = metafit::Vec2(n(rng), n(rng));
    w[j] = u(rng);
  }
  return metafit::Observation::create(kp, w);
}

template <typename T>
void expect_near_all(const T& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(static_cast<std::size_t>(got.size()), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got(static_cast<Eigen::Index>(i)), want[i], tol) << "index " << i;
}

}  // namespace fixture
