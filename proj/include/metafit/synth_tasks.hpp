#pragma once

// Seeded generation of fitting tasks under configurable domain statistics.

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "metafit/body_model.hpp"
#include "metafit/camera_energy.hpp"
#include "metafit/error.hpp"

namespace metafit {

struct DomainProfile {
  std::string name;
  double keypoint_noise_std = 0.0;
  double occlusion_prob = 0.0;
  double pose_spread = 0.3;
  double camera_scale_low = 0.8;
  double camera_scale_high = 1.2;

  void validate() const {
    require(keypoint_noise_std >= 0.0 && occlusion_prob >= 0.0 && occlusion_prob <= 1.0 && pose_spread > 0.0 &&
                camera_scale_low > 0.0 && camera_scale_low <= camera_scale_high,
            ErrorCode::InvalidConfig, "domain profile '" + name + "' has out-of-range fields");
  }
};

inline DomainProfile clean_profile() { return {"clean", 0.005, 0.0, 0.3, 0.8, 1.2}; }
inline DomainProfile hard_profile() { return {"hard", 0.03, 0.3, 0.3, 0.6, 1.4}; }
inline DomainProfile noiseless_profile() { return {"noiseless", 0.0, 0.0, 0.3, 0.8, 1.2}; }

inline DomainProfile builtin_profile(const std::string& name) {
  if (name == "clean") return clean_profile();
  if (name == "hard") return hard_profile();
  if (name == "noiseless") return noiseless_profile();
  fail(ErrorCode::InvalidConfig, "unknown domain profile '" + name + "'");
}

struct TaskRecord {
  int id = 0;
  FitParams gt;
  Observation obs;
  std::string domain;
};

/// SplitMix64 finalizer; derives independent stream seeds from (seed, salt).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Rng>
TaskRecord sample_task(const KinematicTree& tree, const DomainProfile& profile, Rng& rng, int id = 0) {
  profile.validate();
  std::normal_distribution<double> unit(0.0, 1.0);
  const int n = tree.joint_count();

  TaskRecord task;
  task.id = id;
  task.domain = profile.name;
  task.gt.theta.resize(tree.pose_dim());
  for (int k = 0; k < tree.pose_dim(); ++k) task.gt.theta[k] = profile.pose_spread * unit(rng);

  task.gt.beta.resize(kShapeDim);
  bool shape_ok = false;
  for (int attempt = 0; attempt < 100 && !shape_ok; ++attempt) {
    for (int k = 0; k < kShapeDim; ++k) {
      double b;
      do b = unit(rng);
      while (b < -3.0 || b > 3.0);
      task.gt.beta[k] = b;
    }
    const Eigen::VectorXd lengths = tree.base_length() + tree.shape_basis() * task.gt.beta;
    shape_ok = (lengths.tail(n - 1).array() > 0.0).all();
  }
  require(shape_ok, ErrorCode::DegenerateShape, "sample_task: no valid shape after 100 attempts");

  std::uniform_real_distribution<double> scale(profile.camera_scale_low, profile.camera_scale_high);
  const double s = profile.camera_scale_low == profile.camera_scale_high ? profile.camera_scale_low : scale(rng);
  task.gt.camera = Eigen::Vector3d(s, 0.1 * unit(rng), 0.1 * unit(rng));

  const Joints3 joints = forward_kinematics(tree, task.gt);
  task.obs.keypoints.resize(n);
  for (int j = 0; j < n; ++j) {
    task.obs.keypoints[j] = project(task.gt.camera, joints[j]) +
                            profile.keypoint_noise_std * Vec2(unit(rng), unit(rng));
  }
  std::bernoulli_distribution occluded(profile.occlusion_prob);
  std::uniform_real_distribution<double> low_weight(0.0, 0.2);
  task.obs.weights.resize(n);
  do {
    for (int j = 0; j < n; ++j) task.obs.weights[j] = occluded(rng) ? low_weight(rng) : 1.0;
  } while (!(task.obs.weights.array() > 0.0).any());
  return task;
}

/// `count` tasks with ids 0..count-1; task i draws from its own stream.
inline std::vector<TaskRecord> generate_dataset(const KinematicTree& tree, const DomainProfile& profile, int count,
                                                std::uint64_t seed) {
  require(count >= 1, ErrorCode::InvalidInput, "generate_dataset: count must be at least 1");
  std::vector<TaskRecord> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    tasks.push_back(sample_task(tree, profile, rng, i));
  }
  return tasks;
}

/// Train set from `source`, test set from `target`, on separate streams.
inline std::pair<std::vector<TaskRecord>, std::vector<TaskRecord>> domain_pair(const KinematicTree& tree,
                                                                               const DomainProfile& source,
                                                                               const DomainProfile& target,
                                                                               std::pair<int, int> counts,
                                                                               std::uint64_t seed) {
  return {generate_dataset(tree, source, counts.first, mix_seed(seed, 0x7261696eULL)),
          generate_dataset(tree, target, counts.second, mix_seed(seed, 0x74657374ULL))};
}

inline nlohmann::json to_json(const TaskRecord& task) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["id"] = task.id;
  j["domain"] = task.domain;
  j["gt"] = {{"theta", vec(task.gt.theta)},
             {"beta", vec(task.gt.beta)},
             {"camera", std::vector<double>{task.gt.camera[0], task.gt.camera[1], task.gt.camera[2]}}};
  auto kps = nlohmann::json::array();
  for (const auto& u : task.obs.keypoints) kps.push_back({u.x(), u.y()});
  j["obs"] = {{"keypoints", kps}, {"weights", vec(task.obs.weights)}};
  return j;
}

inline TaskRecord task_from_json(const nlohmann::json& j) {
  try {
    auto vec = [](const nlohmann::json& a) {
      const auto v = a.get<std::vector<double>>();
      return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    TaskRecord t;
    t.id = j.at("id").get<int>();
    t.domain = j.at("domain").get<std::string>();
    const auto& gt = j.at("gt");
    t.gt.theta = vec(gt.at("theta"));
    t.gt.beta = vec(gt.at("beta"));
    const Eigen::VectorXd cam = vec(gt.at("camera"));
    require(cam.size() == 3, ErrorCode::InvalidInput, "task json: camera needs 3 values");
    t.gt.camera = cam;
    const auto& obs = j.at("obs");
    for (const auto& kp : obs.at("keypoints")) {
      const auto p = kp.get<std::vector<double>>();
      require(p.size() == 2, ErrorCode::InvalidInput, "task json: keypoints need 2 values");
      t.obs.keypoints.emplace_back(p[0], p[1]);
    }
    t.obs.weights = vec(obs.at("weights"));
    t.obs.validate();
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidInput, std::string("task json: ") + e.what());
  }
}

inline void write_tasks(const std::string& path, const std::vector<TaskRecord>& tasks) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot open '" + path + "' for writing");
  for (const auto& t : tasks) out << to_json(t).dump() << '\n';
  require(static_cast<bool>(out), ErrorCode::Io, "failed writing '" + path + "'");
}

inline std::vector<TaskRecord> read_tasks(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open '" + path + "'");
  std::vector<TaskRecord> tasks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::InvalidInput, "'" + path + "': " + e.what());
    }
    tasks.push_back(task_from_json(j));
  }
  return tasks;
}

}  // namespace metafit
