#pragma once

// Test-time refinement with per-parameter Gaussian update distributions,
// success-rate step sizing, gradient-confidence variance and selective caching.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "metafit/body_model.hpp"
#include "metafit/camera_energy.hpp"
#include "metafit/error.hpp"

namespace metafit {

enum class GradientMode { Analytic, Coordinate, Simultaneous };

/// How an iteration's outcome is credited to each parameter's success history.
/// Global: every active parameter records whether the total energy fell.
/// PerParameter: parameter k records whether its trapezoidal share of the
/// energy change, (g_k(t) + g_k(t+1)) / 2 * step_k, is negative.
enum class SuccessAttribution { Global, PerParameter };

inline const char* to_string(GradientMode m) {
  switch (m) {
    case GradientMode::Analytic: return "analytic";
    case GradientMode::Coordinate: return "coordinate";
    case GradientMode::Simultaneous: return "simultaneous";
  }
  return "analytic";
}

/// Defaults are calibrated for energies in model units (a body roughly 1.7
/// units tall under a unit-scale camera).
struct OptimizerConfig {
  double alpha_base = 3e-3;
  double gamma = 2e-3;
  double epsilon_conv = 1e-3;
  double kappa = 1e-6;
  double epsilon_var = 1e-8;
  double sigma_min = 1e-3;
  double sigma_max = 0.15;
  double beta_mu = 0.0;
  double beta_sigma = 0.0;
  int max_iters = 15;
  int success_window = 5;
  GradientMode gradient_mode = GradientMode::Analytic;
  SuccessAttribution success_attribution = SuccessAttribution::PerParameter;
  bool neutral_success_fill = true;
  double delta = 1e-4;  // finite-difference / SPSA perturbation

  // Ablation switches. Defaults give the full method.
  bool caching = true;
  bool adaptive_updates = true;           // false: deterministic -alpha_base * g steps
  std::optional<double> fixed_sigma;      // set: sigma pinned instead of adapted
  bool stop_on_small_update = true;
  bool refine_shape = false;              // plain gradient steps on beta

  void validate() const {
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    require(positive(alpha_base) && positive(gamma) && positive(epsilon_conv) && positive(kappa) &&
                positive(epsilon_var) && positive(sigma_min) && positive(sigma_max) && positive(delta),
            ErrorCode::InvalidConfig, "optimizer config: rates and thresholds must be positive");
    require(sigma_min < sigma_max, ErrorCode::InvalidConfig, "optimizer config: sigma_min must be below sigma_max");
    require(beta_mu >= 0.0 && beta_mu < 1.0 && beta_sigma >= 0.0 && beta_sigma < 1.0, ErrorCode::InvalidConfig,
            "optimizer config: momentum coefficients must lie in [0, 1)");
    require(max_iters >= 0 && success_window >= 1, ErrorCode::InvalidConfig,
            "optimizer config: max_iters >= 0 and success_window >= 1");
    if (fixed_sigma) require(positive(*fixed_sigma), ErrorCode::InvalidConfig, "optimizer config: fixed_sigma > 0");
  }
};

/// Mean taken relative to the first entry, so equal entries average to exactly that value.
inline double shifted_mean(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  return v[0] + (v.array() - v[0]).mean();
}

struct UpdateDistribution {
  double mu = 0.0;
  double sigma = 0.0;
};

/// Fixed-capacity boolean history; the rate of an empty history is 0.5.
/// With `neutral_fill`, slots not yet written count as half a success, so a
/// single early outcome cannot swing the rate to 0 or 1.
class SuccessHistory {
 public:
  explicit SuccessHistory(int capacity = 5, bool neutral_fill = true)
      : slots_(static_cast<std::size_t>(capacity), false), neutral_fill_(neutral_fill) {}

  void push(bool success) {
    slots_[next_] = success;
    next_ = (next_ + 1) % slots_.size();
    filled_ = std::min(filled_ + 1, slots_.size());
  }

  double rate() const {
    if (filled_ == 0) return 0.5;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < filled_; ++i) hits += slots_[i] ? 1 : 0;
    if (neutral_fill_) {
      return (static_cast<double>(hits) + 0.5 * static_cast<double>(slots_.size() - filled_)) /
             static_cast<double>(slots_.size());
    }
    return static_cast<double>(hits) / static_cast<double>(filled_);
  }

  std::size_t filled() const { return filled_; }

 private:
  std::vector<bool> slots_;
  std::size_t next_ = 0;
  std::size_t filled_ = 0;
  bool neutral_fill_ = true;
};

struct OptimizerState {
  std::vector<bool> active;
  int active_count = 0;
  std::vector<UpdateDistribution> dists;
  std::vector<SuccessHistory> success;
  int iteration = 0;
  double last_update_norm = 0.0;

  bool is_active(int k) const { return active[static_cast<std::size_t>(k)]; }

  void deactivate(int k) {
    if (active[static_cast<std::size_t>(k)]) {
      active[static_cast<std::size_t>(k)] = false;
      --active_count;
    }
  }

  Eigen::VectorXd sigmas() const {
    Eigen::VectorXd s(static_cast<Eigen::Index>(dists.size()));
    for (std::size_t k = 0; k < dists.size(); ++k) s[static_cast<Eigen::Index>(k)] = dists[k].sigma;
    return s;
  }

  double mean_sigma() const { return shifted_mean(sigmas()); }
};

inline OptimizerState init_state(const OptimizerConfig& cfg, int param_dim = 3 * kDefaultJoints + kCameraDim) {
  cfg.validate();
  OptimizerState st;
  st.active.assign(static_cast<std::size_t>(param_dim), true);
  st.active_count = param_dim;
  st.dists.assign(static_cast<std::size_t>(param_dim), UpdateDistribution{0.0, cfg.sigma_max});
  st.success.assign(static_cast<std::size_t>(param_dim), SuccessHistory(cfg.success_window, cfg.neutral_success_fill));
  return st;
}

enum class CacheDecision { Update, Cache };

/// Update iff k is active and |g_k| > gamma; otherwise k leaves the active set for good.
inline CacheDecision caching_decision(OptimizerState& state, int k, double g_k, double gamma) {
  require(k >= 0 && k < static_cast<int>(state.active.size()), ErrorCode::InvalidInput, "caching: index out of range");
  if (state.is_active(k) && std::abs(g_k) > gamma) return CacheDecision::Update;
  state.deactivate(k);
  return CacheDecision::Cache;
}

inline double adaptive_step_size(double success_rate, double alpha_base) {
  require(success_rate >= 0.0 && success_rate <= 1.0, ErrorCode::InvalidInput, "success rate outside [0, 1]");
  return alpha_base * std::exp((success_rate - 0.5) / 0.1);
}

inline double target_variance(double g_k, const OptimizerConfig& cfg) {
  require(std::isfinite(g_k), ErrorCode::InvalidInput, "target_variance: non-finite gradient");
  return std::clamp(cfg.kappa / (std::abs(g_k) + cfg.epsilon_var), cfg.sigma_min, cfg.sigma_max);
}

inline UpdateDistribution evolve_distribution(const UpdateDistribution& dist, double g_k, double step_size,
                                              const OptimizerConfig& cfg) {
  UpdateDistribution next;
  next.mu = cfg.beta_mu * dist.mu + (1.0 - cfg.beta_mu) * (-step_size * g_k);
  next.sigma = cfg.beta_sigma * dist.sigma + (1.0 - cfg.beta_sigma) * target_variance(g_k, cfg);
  // Convex combination of in-range values; clamp only absorbs rounding.
  next.sigma = std::clamp(next.sigma, cfg.sigma_min, cfg.sigma_max);
  return next;
}

template <typename Rng>
double sample_update(const UpdateDistribution& dist, Rng& rng) {
  std::normal_distribution<double> normal(dist.mu, dist.sigma);
  return normal(rng);
}

/// Diverged is never produced by refine itself (it throws); drivers that keep
/// going past a divergent task use it to label the record.
enum class StopReason { ActiveSetEmpty, SmallUpdate, MaxIters, Diverged };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::ActiveSetEmpty: return "active-set-empty";
    case StopReason::SmallUpdate: return "small-update";
    case StopReason::MaxIters: return "max-iters";
    case StopReason::Diverged: return "diverged";
  }
  return "max-iters";
}

/// State after an iteration (t >= 1) or the initial state (t = 0).
struct IterationRecord {
  int t = 0;
  double energy = 0.0;
  double mean_sigma = 0.0;
  int active_count = 0;
  double update_norm = 0.0;
};

struct RefinementResult {
  FitParams params;
  Eigen::VectorXd uncertainty;
  IterationRecord initial;
  std::vector<IterationRecord> trace;
  int iterations_used = 0;
  StopReason stop_reason = StopReason::MaxIters;

  double initial_energy() const { return initial.energy; }
  double final_energy() const { return trace.empty() ? initial.energy : trace.back().energy; }
  double mean_final_sigma() const { return shifted_mean(uncertainty); }
};

class DivergedError : public Error {
 public:
  DivergedError(const std::string& what, std::vector<IterationRecord> trace)
      : Error(ErrorCode::Diverged, what), trace_(std::move(trace)) {}
  const std::vector<IterationRecord>& trace() const { return trace_; }

 private:
  std::vector<IterationRecord> trace_;
};

namespace detail {

template <typename Rng>
Eigen::VectorXd refinement_gradient(const KinematicTree& tree, const FitParams& params, const Observation& obs,
                                    const EnergyConfig& ecfg, const OptimizerConfig& ocfg, const OptimizerState& state,
                                    Rng& rng) {
  switch (ocfg.gradient_mode) {
    case GradientMode::Analytic:
      return energy_grad_analytic(tree, params, obs, ecfg);
    case GradientMode::Simultaneous:
      return energy_grad_stochastic(tree, params, obs, ecfg, ocfg.delta, PerturbationMode::Simultaneous, rng);
    case GradientMode::Coordinate: {
      // Only active coordinates are probed; cached ones are never read.
      auto f = energy_on_flat(tree, params, obs, ecfg);
      const Eigen::VectorXd x = params.flat();
      Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
      Eigen::VectorXd probe = x;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        if (ocfg.caching && !state.is_active(static_cast<int>(k))) continue;
        probe[k] = x[k] + ocfg.delta;
        const double up = f(probe);
        probe[k] = x[k] - ocfg.delta;
        const double down = f(probe);
        probe[k] = x[k];
        g[k] = (up - down) / (2.0 * ocfg.delta);
      }
      return g;
    }
  }
  return {};
}

struct NoObserver {
  void operator()(int, const FitParams&) const {}
};

}  // namespace detail

/// Test-time refinement of pose and camera from `init`. Shape is held unless
/// `refine_shape` is set. `observe(t, params)` sees the parameters after every
/// iteration t >= 1.
template <typename Rng, typename Observer = detail::NoObserver>
RefinementResult refine(const KinematicTree& tree, const FitParams& init, const Observation& obs,
                        const EnergyConfig& ecfg, const OptimizerConfig& ocfg, Rng& rng,
                        Observer&& observe = Observer{}) {
  ocfg.validate();
  ecfg.validate();
  check_dims(tree, init);
  check_obs(tree, obs);
  require(init.finite(), ErrorCode::InvalidInput, "refine: initial parameters are not finite");
  require(init.camera[0] > 0.0, ErrorCode::InvalidCamera, "refine: initial camera scale must be positive");

  const int dim = tree.param_dim();
  OptimizerState state = init_state(ocfg, dim);
  if (ocfg.fixed_sigma) {
    for (auto& d : state.dists) d.sigma = *ocfg.fixed_sigma;
  }

  RefinementResult result;
  result.params = init;
  double current = energy(tree, result.params, obs, ecfg);
  result.initial = IterationRecord{0, current, state.mean_sigma(), state.active_count, 0.0};

  Eigen::VectorXd x = init.flat();
  Eigen::VectorXd step = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd prev_g = Eigen::VectorXd::Zero(dim);
  const bool per_parameter = ocfg.success_attribution == SuccessAttribution::PerParameter;
  for (int t = 0; t < ocfg.max_iters; ++t) {
    const Eigen::VectorXd g = detail::refinement_gradient(tree, result.params, obs, ecfg, ocfg, state, rng);
    if (per_parameter && t > 0) {
      for (int k = 0; k < dim; ++k) {
        if (step[k] != 0.0) state.success[static_cast<std::size_t>(k)].push(0.5 * (prev_g[k] + g[k]) * step[k] < 0.0);
      }
    }
    prev_g = g;
    step.setZero();
    for (int k = 0; k < dim; ++k) {
      if (ocfg.caching && caching_decision(state, k, g[k], ocfg.gamma) == CacheDecision::Cache) continue;
      auto& dist = state.dists[static_cast<std::size_t>(k)];
      const double alpha = adaptive_step_size(state.success[static_cast<std::size_t>(k)].rate(), ocfg.alpha_base);
      UpdateDistribution next = evolve_distribution(dist, g[k], alpha, ocfg);
      if (ocfg.fixed_sigma) next.sigma = *ocfg.fixed_sigma;
      dist = next;
      step[k] = ocfg.adaptive_updates ? sample_update(dist, rng) : -ocfg.alpha_base * g[k];
    }
    x += step;
    result.params.set_flat(x);
    if (ocfg.refine_shape) {
      const EnergyGradient full = energy_gradient_full(tree, result.params, obs, ecfg);
      result.params.beta = (result.params.beta - ocfg.alpha_base * full.beta).cwiseMax(-3.0).cwiseMin(3.0);
    }
    state.iteration = t + 1;
    state.last_update_norm = step.norm();

    const bool finite = result.params.finite() && result.params.camera[0] > 0.0;
    const double next_energy = finite ? energy(tree, result.params, obs, ecfg) : NAN;
    if (!finite || !std::isfinite(next_energy)) {
      throw DivergedError("refine: parameters left the valid domain at iteration " + std::to_string(t + 1),
                          result.trace);
    }
    if (!per_parameter) {
      const bool success = next_energy < current;
      for (int k = 0; k < dim; ++k) {
        if (!ocfg.caching || state.is_active(k)) state.success[static_cast<std::size_t>(k)].push(success);
      }
    }
    current = next_energy;
    observe(t + 1, static_cast<const FitParams&>(result.params));
    result.trace.push_back(
        IterationRecord{t + 1, current, state.mean_sigma(), ocfg.caching ? state.active_count : dim,
                        state.last_update_norm});

    if (ocfg.caching && state.active_count == 0) {
      result.stop_reason = StopReason::ActiveSetEmpty;
      break;
    }
    if (ocfg.stop_on_small_update && state.last_update_norm < ocfg.epsilon_conv) {
      result.stop_reason = StopReason::SmallUpdate;
      break;
    }
  }
  result.iterations_used = static_cast<int>(result.trace.size());
  if (result.iterations_used == ocfg.max_iters && result.stop_reason != StopReason::ActiveSetEmpty &&
      result.stop_reason != StopReason::SmallUpdate) {
    result.stop_reason = StopReason::MaxIters;
  }
  result.uncertainty = state.sigmas();
  return result;
}

}  // namespace metafit
