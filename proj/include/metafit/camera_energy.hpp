#pragma once

// Weak-perspective projection, the keypoint fitting energy and its gradients.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "metafit/body_model.hpp"
#include "metafit/error.hpp"

namespace metafit {

using Vec2 = Eigen::Vector2d;

/// 2D keypoints with per-keypoint confidences in [0, 1].
struct Observation {
  std::vector<Vec2> keypoints;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(keypoints.size()); }

  /// Validated construction: matching lengths, weights in [0, 1], at least one positive.
  static Observation create(std::vector<Vec2> keypoints, Eigen::VectorXd weights) {
    Observation obs{std::move(keypoints), std::move(weights)};
    obs.validate();
    return obs;
  }

  void validate() const {
    require(static_cast<Eigen::Index>(keypoints.size()) == weights.size(), ErrorCode::InvalidInput,
            "observation: keypoint and weight counts differ");
    bool any_positive = false;
    for (Eigen::Index j = 0; j < weights.size(); ++j) {
      require(std::isfinite(weights[j]) && weights[j] >= 0.0 && weights[j] <= 1.0, ErrorCode::InvalidInput,
              "observation: weights must lie in [0, 1]");
      require(keypoints[j].allFinite(), ErrorCode::InvalidInput, "observation: non-finite keypoint");
      any_positive = any_positive || weights[j] > 0.0;
    }
    require(any_positive, ErrorCode::InvalidInput, "observation: every weight is zero");
  }
};

struct EnergyConfig {
  double lambda_pose = 1e-3;
  double lambda_shape = 1e-2;

  void validate() const {
    require(std::isfinite(lambda_pose) && lambda_pose >= 0.0 && std::isfinite(lambda_shape) && lambda_shape >= 0.0,
            ErrorCode::InvalidConfig, "energy config: lambdas must be finite and nonnegative");
  }
};

inline Vec2 project(const Eigen::Vector3d& camera, const Vec3& point) {
  require(camera[0] > 0.0, ErrorCode::InvalidCamera, "camera scale must be positive");
  return Vec2(camera[0] * point.x() + camera[1], camera[0] * point.y() + camera[2]);
}

inline std::vector<Vec2> project_all(const Eigen::Vector3d& camera, const Joints3& joints) {
  std::vector<Vec2> out;
  out.reserve(joints.size());
  for (const auto& p : joints) out.push_back(project(camera, p));
  return out;
}

struct EnergyTerms {
  double data = 0.0;
  double pose_prior = 0.0;
  double shape_prior = 0.0;
  double total() const { return data + pose_prior + shape_prior; }
};

inline void check_obs(const KinematicTree& tree, const Observation& obs) {
  require(obs.size() == tree.joint_count() && obs.weights.size() == tree.joint_count(), ErrorCode::InvalidInput,
          "observation size does not match the tree");
}

inline EnergyTerms energy_terms(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                                const EnergyConfig& cfg) {
  check_obs(tree, obs);
  const Joints3 joints = forward_kinematics(tree, params);
  EnergyTerms e;
  for (int j = 0; j < tree.joint_count(); ++j) {
    e.data += obs.weights[j] * (project(params.camera, joints[j]) - obs.keypoints[j]).squaredNorm();
  }
  e.pose_prior = cfg.lambda_pose * params.theta.tail(params.theta.size() - 3).squaredNorm();
  e.shape_prior = cfg.lambda_shape * params.beta.squaredNorm();
  if (!std::isfinite(e.total())) fail(ErrorCode::NumericOverflow, "energy is not finite");
  return e;
}

/// sum_j w_j |proj(FK_j) - u_j|^2 + lambda_pose |theta without root|^2 + lambda_shape |beta|^2
inline double energy(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                     const EnergyConfig& cfg) {
  return energy_terms(tree, params, obs, cfg).total();
}

/// Reprojection term alone.
inline double data_energy(const KinematicTree& tree, const FitParams& params, const Observation& obs) {
  return energy_terms(tree, params, obs, EnergyConfig{0.0, 0.0}).data;
}

struct EnergyGradient {
  Eigen::VectorXd params;  // pose then camera
  Eigen::VectorXd beta;
  double value = 0.0;
};

/// Gradient of the energy over the refined vector and over shape, in one pass.
/// `include_priors = false` differentiates the reprojection term only.
inline EnergyGradient energy_gradient_full(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                                           const EnergyConfig& cfg, bool include_priors = true) {
  check_obs(tree, obs);
  const Posed posed = pose_tree(tree, params);
  const double s = params.camera[0];
  require(s > 0.0, ErrorCode::InvalidCamera, "camera scale must be positive");
  const int n = tree.joint_count();
  Joints3 force(n);
  Eigen::Vector3d dcam = Eigen::Vector3d::Zero();
  double data = 0.0;
  for (int j = 0; j < n; ++j) {
    const Vec3& p = posed.positions[j];
    const Vec2 r = Vec2(s * p.x() + params.camera[1], s * p.y() + params.camera[2]) - obs.keypoints[j];
    const double w = obs.weights[j];
    data += w * r.squaredNorm();
    force[j] = Vec3(2.0 * w * s * r.x(), 2.0 * w * s * r.y(), 0.0);
    dcam[0] += 2.0 * w * (r.x() * p.x() + r.y() * p.y());
    dcam[1] += 2.0 * w * r.x();
    dcam[2] += 2.0 * w * r.y();
  }
  const FkGradient fk = backprop_fk(tree, posed, params, force);
  EnergyGradient g;
  g.params.resize(tree.param_dim());
  g.params << fk.theta, dcam;
  g.beta = fk.beta;
  g.value = data;
  if (include_priors) {
    g.params.segment(3, tree.pose_dim() - 3) += 2.0 * cfg.lambda_pose * params.theta.tail(tree.pose_dim() - 3);
    g.beta += 2.0 * cfg.lambda_shape * params.beta;
    g.value += cfg.lambda_pose * params.theta.tail(tree.pose_dim() - 3).squaredNorm() +
               cfg.lambda_shape * params.beta.squaredNorm();
  }
  if (!std::isfinite(g.value) || !g.params.allFinite()) fail(ErrorCode::NumericOverflow, "gradient is not finite");
  return g;
}

/// dE/d(theta, camera) with shape held fixed.
inline Eigen::VectorXd energy_grad_analytic(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                                            const EnergyConfig& cfg) {
  return energy_gradient_full(tree, params, obs, cfg).params;
}

enum class PerturbationMode { Coordinate, Simultaneous };

/// Per-coordinate central difference (f(x + d e_k) - f(x - d e_k)) / 2d.
template <typename F>
Eigen::VectorXd central_difference_gradient(F&& f, const Eigen::VectorXd& x, double delta) {
  require(delta > 0.0, ErrorCode::InvalidInput, "delta must be positive");
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + delta;
    const double up = f(probe);
    probe[k] = x[k] - delta;
    const double down = f(probe);
    probe[k] = x[k];
    g[k] = (up - down) / (2.0 * delta);
  }
  return g;
}

/// One Rademacher perturbation: g_k = (f(x + d D) - f(x - d D)) / (2 d D_k).
template <typename F, typename Rng>
Eigen::VectorXd spsa_gradient(F&& f, const Eigen::VectorXd& x, double delta, Rng& rng) {
  require(delta > 0.0, ErrorCode::InvalidInput, "delta must be positive");
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd dir(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) dir[k] = coin(rng) ? 1.0 : -1.0;
  const double diff = f(x + delta * dir) - f(x - delta * dir);
  return (diff / (2.0 * delta)) * dir.cwiseInverse();
}

template <typename F, typename Rng>
Eigen::VectorXd stochastic_gradient(F&& f, const Eigen::VectorXd& x, double delta, PerturbationMode mode, Rng& rng) {
  if (mode == PerturbationMode::Coordinate) return central_difference_gradient(f, x, delta);
  return spsa_gradient(f, x, delta, rng);
}

/// Energy as a function of the refined vector (pose then camera), shape fixed.
inline auto energy_on_flat(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                           const EnergyConfig& cfg) {
  return [&tree, p = params, &obs, &cfg](const Eigen::VectorXd& flat) mutable {
    p.set_flat(flat);
    return energy(tree, p, obs, cfg);
  };
}

template <typename Rng>
Eigen::VectorXd energy_grad_stochastic(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                                       const EnergyConfig& cfg, double delta, PerturbationMode mode, Rng& rng) {
  require(delta > 0.0, ErrorCode::InvalidInput, "delta must be positive");
  return stochastic_gradient(energy_on_flat(tree, params, obs, cfg), params.flat(), delta, mode, rng);
}

}  // namespace metafit
