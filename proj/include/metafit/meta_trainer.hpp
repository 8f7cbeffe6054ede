#pragma once

// Keypoint-to-parameter regressor and first-order meta-training of its
// initial predictions through simulated refinement.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "metafit/adaptive_optimizer.hpp"
#include "metafit/body_model.hpp"
#include "metafit/camera_energy.hpp"
#include "metafit/error.hpp"
#include "metafit/metrics.hpp"
#include "metafit/synth_tasks.hpp"

namespace metafit {

inline constexpr int kHiddenUnits = 128;

inline double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// features (2J coordinates, J weights) -> tanh(128) -> tanh(128) -> 3J pose, 10 shape, 3 camera.
/// The camera scale goes through softplus. Predicted shape is clamped to [-3, 3],
/// the range on which the tree guarantees positive bone lengths.
struct Regressor {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;

  static Regressor zeros(int joints) {
    require(joints >= 1, ErrorCode::InvalidInput, "regressor: joint count must be positive");
    Regressor r;
    r.w1 = Eigen::MatrixXd::Zero(kHiddenUnits, 3 * joints);
    r.b1 = Eigen::VectorXd::Zero(kHiddenUnits);
    r.w2 = Eigen::MatrixXd::Zero(kHiddenUnits, kHiddenUnits);
    r.b2 = Eigen::VectorXd::Zero(kHiddenUnits);
    r.w3 = Eigen::MatrixXd::Zero(3 * joints + kShapeDim + kCameraDim, kHiddenUnits);
    r.b3 = Eigen::VectorXd::Zero(3 * joints + kShapeDim + kCameraDim);
    return r;
  }

  /// Scaled Gaussian weights, zero biases except the camera scale (s starts near 1).
  static Regressor random(int joints, std::uint64_t seed) {
    Regressor r = zeros(joints);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    auto fill = [&](Eigen::MatrixXd& m, double gain) {
      const double std = gain / std::sqrt(static_cast<double>(m.cols()));
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std * unit(rng);
    };
    fill(r.w1, 1.0);
    fill(r.w2, 1.0);
    fill(r.w3, 0.1);
    r.b3[3 * joints + kShapeDim] = std::log(std::expm1(1.0));
    return r;
  }

  int joints() const { return static_cast<int>(w1.cols()) / 3; }
  int input_dim() const { return static_cast<int>(w1.cols()); }
  int output_dim() const { return static_cast<int>(w3.rows()); }

  bool finite() const {
    return w1.allFinite() && w2.allFinite() && w3.allFinite() && b1.allFinite() && b2.allFinite() && b3.allFinite();
  }

  void validate() const {
    const int j = joints();
    require(j >= 1 && w1.rows() == kHiddenUnits && w1.cols() == 3 * j && b1.size() == kHiddenUnits &&
                w2.rows() == kHiddenUnits && w2.cols() == kHiddenUnits && b2.size() == kHiddenUnits &&
                w3.rows() == 3 * j + kShapeDim + kCameraDim && w3.cols() == kHiddenUnits && b3.size() == w3.rows(),
            ErrorCode::InvalidInput, "regressor: layer shapes do not match the architecture");
    require(finite(), ErrorCode::InvalidInput, "regressor: non-finite weights");
  }

  void scale(double a) {
    w1 *= a;
    w2 *= a;
    w3 *= a;
    b1 *= a;
    b2 *= a;
    b3 *= a;
  }

  /// this += a * other, layer by layer.
  void axpy(double a, const Regressor& other) {
    w1 += a * other.w1;
    w2 += a * other.w2;
    w3 += a * other.w3;
    b1 += a * other.b1;
    b2 += a * other.b2;
    b3 += a * other.b3;
  }
};

inline std::string architecture_tag(int joints) {
  return "mlp-" + std::to_string(3 * joints) + "-tanh128-tanh128-" +
         std::to_string(3 * joints + kShapeDim + kCameraDim) + "-softplus-scale";
}

inline Eigen::VectorXd features(const Observation& obs) {
  const int n = obs.size();
  Eigen::VectorXd x(3 * n);
  for (int j = 0; j < n; ++j) {
    x[2 * j] = obs.keypoints[static_cast<std::size_t>(j)].x();
    x[2 * j + 1] = obs.keypoints[static_cast<std::size_t>(j)].y();
    x[2 * n + j] = obs.weights[j];
  }
  return x;
}

struct ForwardCache {
  Eigen::VectorXd x, h1, h2, out;
};

inline ForwardCache forward(const Regressor& reg, const Observation& obs) {
  require(obs.size() == reg.joints() && obs.weights.size() == reg.joints(), ErrorCode::InvalidInput,
          "regress: observation size does not match the regressor");
  ForwardCache c;
  c.x = features(obs);
  c.h1 = (reg.w1 * c.x + reg.b1).array().tanh();
  c.h2 = (reg.w2 * c.h1 + reg.b2).array().tanh();
  c.out = reg.w3 * c.h2 + reg.b3;
  return c;
}

inline FitParams decode(const Eigen::VectorXd& out, int joints) {
  FitParams p;
  p.theta = out.head(3 * joints);
  p.beta = out.segment(3 * joints, kShapeDim).cwiseMax(-3.0).cwiseMin(3.0);
  const Eigen::Index c = 3 * joints + kShapeDim;
  // Floored so the scale stays positive where softplus underflows.
  const double scale = std::max(softplus(out[c]), std::numeric_limits<double>::min());
  p.camera = Eigen::Vector3d(scale, out[c + 1], out[c + 2]);
  return p;
}

inline FitParams regress(const Regressor& reg, const Observation& obs) {
  return decode(forward(reg, obs).out, reg.joints());
}

/// Gradient of a loss with respect to the weights, given dL/d(theta, beta, camera)
/// at the regressor's own prediction.
inline Regressor backprop_regressor(const Regressor& reg, const ForwardCache& c, const Eigen::VectorXd& d_theta,
                                    const Eigen::VectorXd& d_beta, const Eigen::Vector3d& d_camera) {
  const int j = reg.joints();
  Eigen::VectorXd d_out(reg.output_dim());
  d_out.head(3 * j) = d_theta;
  for (int k = 0; k < kShapeDim; ++k) {
    const double raw = c.out[3 * j + k];
    d_out[3 * j + k] = (raw > -3.0 && raw < 3.0) ? d_beta[k] : 0.0;
  }
  const Eigen::Index cs = 3 * j + kShapeDim;
  d_out[cs] = d_camera[0] * sigmoid(c.out[cs]);
  d_out[cs + 1] = d_camera[1];
  d_out[cs + 2] = d_camera[2];

  Regressor g;
  g.w3 = d_out * c.h2.transpose();
  g.b3 = d_out;
  const Eigen::VectorXd d_z2 = (reg.w3.transpose() * d_out).array() * (1.0 - c.h2.array().square());
  g.w2 = d_z2 * c.h1.transpose();
  g.b2 = d_z2;
  const Eigen::VectorXd d_z1 = (reg.w2.transpose() * d_z2).array() * (1.0 - c.h1.array().square());
  g.w1 = d_z1 * c.x.transpose();
  g.b1 = d_z1;
  return g;
}

/// Mean over joints of the squared 3D position error against the task's ground truth.
inline double final_loss(const KinematicTree& tree, const FitParams& params, const TaskRecord& task) {
  const Joints3 p = forward_kinematics(tree, params);
  const Joints3 q = forward_kinematics(tree, task.gt);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) sum += (p[j] - q[j]).squaredNorm();
  return sum / static_cast<double>(p.size());
}

/// d final_loss / d(theta, beta); the camera does not enter the 3D loss.
inline FkGradient final_loss_gradient(const KinematicTree& tree, const FitParams& params, const TaskRecord& task) {
  const Posed posed = pose_tree(tree, params);
  const Joints3 q = forward_kinematics(tree, task.gt);
  const double n = static_cast<double>(q.size());
  Joints3 force(q.size());
  for (std::size_t j = 0; j < q.size(); ++j) force[j] = (2.0 / n) * (posed.positions[j] - q[j]);
  return backprop_fk(tree, posed, params, force);
}

enum class OuterOptimizer { Sgd, Adam };

struct MetaConfig {
  int inner_steps = 3;
  double outer_lr = 1e-3;
  OuterOptimizer optimizer = OuterOptimizer::Adam;
  double intermediate_weight = 0.1;
  double intermediate_decay = 0.5;
  int batch_size = 32;
  int epochs = 150;
  std::uint64_t seed = 0;

  /// inner_steps = 0 is accepted: it trains on the initial prediction alone.
  void validate() const {
    require(inner_steps >= 0, ErrorCode::InvalidConfig, "meta config: inner_steps must be >= 0");
    require(std::isfinite(outer_lr) && outer_lr >= 0.0, ErrorCode::InvalidConfig, "meta config: outer_lr >= 0");
    require(std::isfinite(intermediate_weight) && intermediate_weight >= 0.0, ErrorCode::InvalidConfig,
            "meta config: intermediate_weight >= 0");
    require(intermediate_decay > 0.0 && intermediate_decay <= 1.0, ErrorCode::InvalidConfig,
            "meta config: intermediate_decay must lie in (0, 1]");
    require(batch_size >= 1 && epochs >= 0, ErrorCode::InvalidConfig, "meta config: batch_size >= 1, epochs >= 0");
  }

  double step_weight(int t) const { return intermediate_weight * std::pow(intermediate_decay, t); }
};

struct LossReport {
  double final_loss = 0.0;
  std::vector<double> intermediate_losses;
  double total = 0.0;
};

struct InnerResult {
  std::vector<FitParams> trajectory;  // T + 1 states, trajectory[0] is the initial prediction
  LossReport report;
  bool diverged = false;
};

/// Exactly T refinement steps from `init` without the small-update stop. If the
/// active set empties early, or a step leaves the valid domain, the remaining
/// states repeat the last valid one (the latter sets `diverged`).
template <typename Rng>
InnerResult inner_loop(const KinematicTree& tree, const FitParams& init, const TaskRecord& task,
                       const EnergyConfig& ecfg, const OptimizerConfig& ocfg, const MetaConfig& mcfg, Rng& rng) {
  mcfg.validate();
  InnerResult r;
  r.trajectory.reserve(static_cast<std::size_t>(mcfg.inner_steps) + 1);
  r.trajectory.push_back(init);
  if (mcfg.inner_steps > 0) {
    OptimizerConfig cfg = ocfg;
    cfg.max_iters = mcfg.inner_steps;
    cfg.stop_on_small_update = false;
    try {
      refine(tree, init, task.obs, ecfg, cfg, rng, [&](int, const FitParams& p) { r.trajectory.push_back(p); });
    } catch (const DivergedError&) {
      r.diverged = true;
    }
  }
  while (static_cast<int>(r.trajectory.size()) < mcfg.inner_steps + 1) r.trajectory.push_back(r.trajectory.back());

  r.report.final_loss = final_loss(tree, r.trajectory.back(), task);
  r.report.total = r.report.final_loss;
  for (int t = 0; t < mcfg.inner_steps; ++t) {
    const double proj = data_energy(tree, r.trajectory[static_cast<std::size_t>(t)], task.obs);
    r.report.intermediate_losses.push_back(proj);
    r.report.total += mcfg.step_weight(t) * proj;
  }
  return r;
}

inline constexpr std::uint64_t kShuffleSalt = 0x73687566ULL;
inline constexpr std::uint64_t kInnerSalt = 0x696e6e72ULL;
inline constexpr std::uint64_t kEvalSalt = 0x6576616cULL;

struct TaskGradient {
  Regressor grad;
  LossReport report;
};

/// First-order gradient of one task's training loss: every loss term is
/// differentiated at its own trajectory state and applied to the initial prediction.
template <typename Rng>
TaskGradient task_gradient(const KinematicTree& tree, const Regressor& reg, const TaskRecord& task,
                           const EnergyConfig& ecfg, const OptimizerConfig& ocfg, const MetaConfig& mcfg, Rng& rng) {
  const ForwardCache cache = forward(reg, task.obs);
  const FitParams init = decode(cache.out, reg.joints());
  if (!init.finite()) fail(ErrorCode::TrainingDivergence, "regressor produced non-finite parameters");
  InnerResult inner = inner_loop(tree, init, task, ecfg, ocfg, mcfg, rng);

  const FkGradient gf = final_loss_gradient(tree, inner.trajectory.back(), task);
  Eigen::VectorXd d_theta = gf.theta;
  Eigen::VectorXd d_beta = gf.beta;
  Eigen::Vector3d d_camera = Eigen::Vector3d::Zero();
  for (int t = 0; t < mcfg.inner_steps; ++t) {
    const double w = mcfg.step_weight(t);
    if (w == 0.0) continue;
    const EnergyGradient ge =
        energy_gradient_full(tree, inner.trajectory[static_cast<std::size_t>(t)], task.obs, ecfg, false);
    d_theta += w * ge.params.head(tree.pose_dim());
    d_beta += w * ge.beta;
    d_camera += w * ge.params.tail(kCameraDim);
  }
  return {backprop_regressor(reg, cache, d_theta, d_beta, d_camera), std::move(inner.report)};
}

/// First and second moment estimates for Adam (beta1 0.9, beta2 0.999, eps 1e-8).
struct AdamState {
  Regressor m, v;
  int step = 0;

  static AdamState zeros(int joints) { return {Regressor::zeros(joints), Regressor::zeros(joints), 0}; }
};

namespace detail {

template <typename F>
void zip_layers(Regressor& a, Regressor& m, Regressor& v, const Regressor& g, F f) {
  f(a.w1, m.w1, v.w1, g.w1);
  f(a.w2, m.w2, v.w2, g.w2);
  f(a.w3, m.w3, v.w3, g.w3);
  auto vec = [&](Eigen::VectorXd& x, Eigen::VectorXd& mx, Eigen::VectorXd& vx, const Eigen::VectorXd& gx) {
    Eigen::Map<Eigen::MatrixXd> xm(x.data(), x.size(), 1), mm(mx.data(), mx.size(), 1), vm(vx.data(), vx.size(), 1);
    const Eigen::MatrixXd gm = gx;
    f(xm, mm, vm, gm);
  };
  vec(a.b1, m.b1, v.b1, g.b1);
  vec(a.b2, m.b2, v.b2, g.b2);
  vec(a.b3, m.b3, v.b3, g.b3);
}

}  // namespace detail

/// Applies one update with the mean gradient `grad`.
inline void apply_update(Regressor& reg, const Regressor& grad, const MetaConfig& mcfg, AdamState& adam) {
  if (mcfg.optimizer == OuterOptimizer::Sgd) {
    reg.axpy(-mcfg.outer_lr, grad);
    return;
  }
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-8;
  ++adam.step;
  const double c1 = 1.0 - std::pow(b1, adam.step);
  const double c2 = 1.0 - std::pow(b2, adam.step);
  const double lr = mcfg.outer_lr;
  detail::zip_layers(reg, adam.m, adam.v, grad, [&](auto& x, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    x.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  });
}

/// Per-task inner-loop stream: depends on the batch draw and the task id only,
/// so batch order never changes a task's refinement.
inline std::uint64_t task_stream(std::uint64_t batch_seed, int task_id) {
  return mix_seed(batch_seed, static_cast<std::uint64_t>(task_id));
}

/// One update (SGD or Adam per `mcfg.optimizer`) on the batch-mean first-order
/// gradient. Gradients are reduced in task-id order. Without `adam`, Adam starts
/// from zero moments.
template <typename Rng>
std::pair<Regressor, LossReport> outer_step(const KinematicTree& tree, const Regressor& reg,
                                            const std::vector<TaskRecord>& batch, const EnergyConfig& ecfg,
                                            const OptimizerConfig& ocfg, const MetaConfig& mcfg, Rng& rng,
                                            AdamState* adam = nullptr) {
  require(!batch.empty(), ErrorCode::InvalidInput, "outer_step: empty batch");
  mcfg.validate();
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return batch[a].id < batch[b].id; });

  const std::uint64_t batch_seed = rng();
  Regressor sum = Regressor::zeros(reg.joints());
  LossReport mean;
  mean.intermediate_losses.assign(static_cast<std::size_t>(mcfg.inner_steps), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i : order) {
    std::mt19937_64 task_rng(task_stream(batch_seed, batch[i].id));
    TaskGradient tg = task_gradient(tree, reg, batch[i], ecfg, ocfg, mcfg, task_rng);
    sum.axpy(1.0, tg.grad);
    mean.final_loss += inv * tg.report.final_loss;
    mean.total += inv * tg.report.total;
    for (std::size_t t = 0; t < mean.intermediate_losses.size(); ++t) {
      mean.intermediate_losses[t] += inv * tg.report.intermediate_losses[t];
    }
  }
  if (!sum.finite()) fail(ErrorCode::TrainingDivergence, "outer_step: non-finite meta-gradient");
  Regressor next = reg;
  sum.scale(inv);
  AdamState local = adam ? AdamState{} : AdamState::zeros(reg.joints());
  apply_update(next, sum, mcfg, adam ? *adam : local);
  if (!next.finite()) fail(ErrorCode::TrainingDivergence, "outer_step: weights became non-finite");
  return {std::move(next), std::move(mean)};
}

/// Refined-from-regressor evaluation of one task. A divergent refinement does
/// not throw here: the record falls back to the initial prediction and is flagged.
struct EvalRecord {
  int task_id = 0;
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double initial_mpjpe = 0.0;
  bool diverged = false;
  RefinementResult refinement;
};

inline EvalRecord evaluate_task(const KinematicTree& tree, const FitParams& init, const TaskRecord& task,
                                const EnergyConfig& ecfg, const OptimizerConfig& ocfg, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(mix_seed(seed, kEvalSalt), static_cast<std::uint64_t>(task.id)));
  EvalRecord e;
  e.task_id = task.id;
  try {
    e.refinement = refine(tree, init, task.obs, ecfg, ocfg, rng);
  } catch (const DivergedError& err) {
    // Keep the initial prediction; the record is flagged and the partial trace kept.
    e.diverged = true;
    e.refinement.params = init;
    e.refinement.initial = IterationRecord{0, energy(tree, init, task.obs, ecfg), ocfg.sigma_max,
                                           tree.param_dim(), 0.0};
    e.refinement.trace = err.trace();
    e.refinement.iterations_used = static_cast<int>(err.trace().size());
    e.refinement.stop_reason = StopReason::Diverged;
    e.refinement.uncertainty = Eigen::VectorXd::Constant(tree.param_dim(), ocfg.sigma_max);
  }
  const Joints3 gt = forward_kinematics(tree, task.gt);
  const Joints3 pred = forward_kinematics(tree, e.refinement.params);
  e.mpjpe = mpjpe(pred, gt);
  e.pa_mpjpe = pa_mpjpe(pred, gt);
  e.initial_mpjpe = mpjpe(forward_kinematics(tree, init), gt);
  return e;
}

inline std::vector<EvalRecord> evaluate(const KinematicTree& tree, const Regressor& reg,
                                        const std::vector<TaskRecord>& tasks, const EnergyConfig& ecfg,
                                        const OptimizerConfig& ocfg, std::uint64_t seed) {
  std::vector<EvalRecord> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(evaluate_task(tree, regress(reg, t.obs), t, ecfg, ocfg, seed));
  return out;
}

struct CurvePoint {
  int epoch = 0;
  double mean_final_loss = 0.0;
  double mean_heldout_mpjpe = 0.0;
};

struct TrainResult {
  Regressor regressor;
  std::vector<CurvePoint> curve;
};

struct NoEpochHook {
  void operator()(const CurvePoint&, const Regressor&) const {}
};

/// Epochs of shuffled mini-batches. Shuffling and inner-loop sampling use
/// separate streams derived from `mcfg.seed`. Held-out error is the mean mpjpe
/// after a full refinement from the regressor's predictions (skipped when empty).
/// `on_epoch` runs after every completed epoch.
template <typename Hook = NoEpochHook>
TrainResult meta_train(const KinematicTree& tree, Regressor reg, const std::vector<TaskRecord>& train,
                       const std::vector<TaskRecord>& heldout, const EnergyConfig& ecfg, const OptimizerConfig& ocfg,
                       const MetaConfig& mcfg, Hook&& on_epoch = Hook{}) {
  require(!train.empty(), ErrorCode::InvalidInput, "meta_train: empty dataset");
  mcfg.validate();
  reg.validate();
  std::mt19937_64 shuffle_rng(mix_seed(mcfg.seed, kShuffleSalt));
  std::mt19937_64 inner_rng(mix_seed(mcfg.seed, kInnerSalt));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  AdamState adam = AdamState::zeros(reg.joints());
  TrainResult result;
  for (int epoch = 1; epoch <= mcfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(mcfg.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(mcfg.batch_size));
      std::vector<TaskRecord> batch;
      batch.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
      auto [next, report] = outer_step(tree, reg, batch, ecfg, ocfg, mcfg, inner_rng, &adam);
      reg = std::move(next);
      loss_sum += report.final_loss * static_cast<double>(batch.size());
    }
    CurvePoint point{epoch, loss_sum / static_cast<double>(train.size()), 0.0};
    if (!heldout.empty()) {
      double err = 0.0;
      for (const auto& e : evaluate(tree, reg, heldout, ecfg, ocfg, mcfg.seed)) err += e.mpjpe;
      point.mean_heldout_mpjpe = err / static_cast<double>(heldout.size());
    }
    result.curve.push_back(point);
    on_epoch(static_cast<const CurvePoint&>(point), static_cast<const Regressor&>(reg));
  }
  result.regressor = std::move(reg);
  return result;
}

// Checkpoints ---------------------------------------------------------------

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  require(!rows.empty(), ErrorCode::InvalidInput, "checkpoint: empty matrix");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r].size() == rows[0].size(), ErrorCode::InvalidInput, "checkpoint: ragged matrix");
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline nlohmann::json checkpoint_json(const Regressor& reg, std::uint64_t seed, int epoch) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["architecture"] = architecture_tag(reg.joints());
  j["weights"] = {{"w1", matrix_json(reg.w1)}, {"b1", vec(reg.b1)}, {"w2", matrix_json(reg.w2)},
                  {"b2", vec(reg.b2)},         {"w3", matrix_json(reg.w3)}, {"b3", vec(reg.b3)}};
  j["seed"] = seed;
  j["epoch"] = epoch;
  return j;
}

struct Checkpoint {
  Regressor regressor;
  std::uint64_t seed = 0;
  int epoch = 0;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    auto vec = [](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    Checkpoint c;
    const auto& w = j.at("weights");
    c.regressor.w1 = matrix_from_json(w.at("w1"));
    c.regressor.b1 = vec(w.at("b1"));
    c.regressor.w2 = matrix_from_json(w.at("w2"));
    c.regressor.b2 = vec(w.at("b2"));
    c.regressor.w3 = matrix_from_json(w.at("w3"));
    c.regressor.b3 = vec(w.at("b3"));
    c.regressor.validate();
    require(j.at("architecture").get<std::string>() == architecture_tag(c.regressor.joints()),
            ErrorCode::InvalidInput, "checkpoint: architecture tag does not match the weights");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<int>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidInput, std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, const Regressor& reg, std::uint64_t seed, int epoch) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << checkpoint_json(reg, seed, epoch).dump() << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidInput, "'" + path + "': " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace metafit
