#pragma once

// Articulated kinematic chain: axis-angle joints, shape-dependent bone lengths,
// and the forward/reverse passes used by the fitting energy.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "metafit/error.hpp"

namespace metafit {

inline constexpr int kShapeDim = 10;
inline constexpr int kCameraDim = 3;
inline constexpr int kDefaultJoints = 24;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using ShapeBasis = Eigen::Matrix<double, Eigen::Dynamic, kShapeDim>;
using Joints3 = std::vector<Vec3>;

inline Mat3 skew(const Vec3& v) {
  Mat3 k;
  k << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return k;
}

inline bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) { return v.allFinite(); }

/// Axis-angle to rotation matrix. Below an angle of 1e-8 the second-order
/// Taylor expansion I + K + K^2/2 is used.
inline Mat3 rodrigues(const Vec3& axis_angle) {
  require(axis_angle.allFinite(), ErrorCode::InvalidInput, "rodrigues: non-finite axis-angle");
  const double angle = axis_angle.norm();
  const Mat3 k = skew(axis_angle);
  if (angle < 1e-8) return Mat3::Identity() + k + 0.5 * k * k;
  const double half_sin = std::sin(0.5 * angle);
  const double a = std::sin(angle) / angle;
  const double b = 2.0 * half_sin * half_sin / (angle * angle);
  return Mat3::Identity() + a * k + b * k * k;
}

/// Left Jacobian of SO(3): d(exp(v)) = [J_l(v) dv]x exp(v).
inline Mat3 left_jacobian(const Vec3& v) {
  const double angle = v.norm();
  const double a2 = angle * angle;
  double a;
  double b;
  if (angle < 1e-2) {
    a = 0.5 - a2 / 24.0 + a2 * a2 / 720.0;
    b = 1.0 / 6.0 - a2 / 120.0 + a2 * a2 / 5040.0;
  } else {
    const double half_sin = std::sin(0.5 * angle);
    a = 2.0 * half_sin * half_sin / a2;
    b = (angle - std::sin(angle)) / (a2 * angle);
  }
  const Mat3 k = skew(v);
  return Mat3::Identity() + a * k + b * k * k;
}

/// Skeleton topology, rest geometry and a linear shape basis on bone lengths.
/// The root sits at the origin; its rest offset and length are carried for
/// serialization symmetry but never used.
class KinematicTree {
 public:
  KinematicTree(std::vector<int> parent, std::vector<Vec3> rest_offset, Eigen::VectorXd base_length,
                ShapeBasis shape_basis)
      : parent_(std::move(parent)),
        rest_offset_(std::move(rest_offset)),
        base_length_(std::move(base_length)),
        shape_basis_(std::move(shape_basis)) {
    const auto j = static_cast<Eigen::Index>(parent_.size());
    require(j >= 1, ErrorCode::InvalidInput, "tree: no joints");
    require(static_cast<Eigen::Index>(rest_offset_.size()) == j && base_length_.size() == j &&
                shape_basis_.rows() == j,
            ErrorCode::InvalidInput, "tree: inconsistent joint counts");
    require(parent_[0] == -1, ErrorCode::InvalidInput, "tree: joint 0 must be the root");
    for (int i = 1; i < j; ++i) {
      require(parent_[i] >= 0 && parent_[i] < i, ErrorCode::InvalidInput,
              "tree: parent indices must be topologically ordered (parent[j] < j)");
    }
    for (int i = 0; i < j; ++i) {
      require(std::abs(rest_offset_[i].norm() - 1.0) < 1e-9, ErrorCode::InvalidInput,
              "tree: rest offsets must have unit norm");
      require(std::isfinite(base_length_[i]) && base_length_[i] >= 0.0, ErrorCode::InvalidInput,
              "tree: base lengths must be finite and nonnegative");
    }
    require(shape_basis_.allFinite(), ErrorCode::InvalidInput, "tree: non-finite shape basis");
    // Worst case over the box |beta|_inf <= 3 is base - 3 * sum_k |B_jk|.
    for (int i = 1; i < j; ++i) {
      const double worst = base_length_[i] - 3.0 * shape_basis_.row(i).cwiseAbs().sum();
      require(worst > 0.0, ErrorCode::DegenerateShape,
              "tree: bone " + std::to_string(i) + " can collapse for |beta|_inf <= 3");
    }
    children_.resize(parent_.size());
    for (int i = 1; i < j; ++i) children_[parent_[i]].push_back(i);
  }

  int joint_count() const { return static_cast<int>(parent_.size()); }
  int pose_dim() const { return 3 * joint_count(); }
  /// Size of the refined parameter vector: pose followed by camera.
  int param_dim() const { return pose_dim() + kCameraDim; }

  const std::vector<int>& parent() const { return parent_; }
  const std::vector<Vec3>& rest_offset() const { return rest_offset_; }
  const Eigen::VectorXd& base_length() const { return base_length_; }
  const ShapeBasis& shape_basis() const { return shape_basis_; }
  const std::vector<int>& children(int j) const { return children_[j]; }
  bool is_leaf(int j) const { return children_[j].empty(); }

  /// Appends a leaf joint (zero shape row). Used to probe FK invariances.
  KinematicTree with_leaf(int parent_joint, const Vec3& direction, double length) const {
    auto parent = parent_;
    auto offsets = rest_offset_;
    Eigen::VectorXd lengths(base_length_.size() + 1);
    lengths << base_length_, length;
    ShapeBasis basis(shape_basis_.rows() + 1, kShapeDim);
    basis << shape_basis_, Eigen::RowVectorXd::Zero(kShapeDim);
    parent.push_back(parent_joint);
    offsets.push_back(direction.normalized());
    return KinematicTree(std::move(parent), std::move(offsets), std::move(lengths), std::move(basis));
  }

 private:
  std::vector<int> parent_;
  std::vector<Vec3> rest_offset_;
  Eigen::VectorXd base_length_;
  ShapeBasis shape_basis_;
  std::vector<std::vector<int>> children_;
};

/// Pose (axis-angle per joint), shape coefficients and weak-perspective camera
/// [s, tx, ty]. The refined vector is pose then camera; shape is kept apart.
struct FitParams {
  Eigen::VectorXd theta;
  Eigen::VectorXd beta;
  Eigen::Vector3d camera;

  static FitParams zeros(int joints, double scale = 1.0) {
    FitParams p;
    p.theta = Eigen::VectorXd::Zero(3 * joints);
    p.beta = Eigen::VectorXd::Zero(kShapeDim);
    p.camera = Eigen::Vector3d(scale, 0.0, 0.0);
    return p;
  }

  Vec3 joint_rotation(int j) const { return theta.segment<3>(3 * j); }

  Eigen::VectorXd flat() const {
    Eigen::VectorXd out(theta.size() + kCameraDim);
    out << theta, camera;
    return out;
  }

  void set_flat(const Eigen::Ref<const Eigen::VectorXd>& v) {
    require(v.size() == theta.size() + kCameraDim, ErrorCode::InvalidInput, "FitParams: flat size mismatch");
    theta = v.head(theta.size());
    camera = v.tail<kCameraDim>();
  }

  bool finite() const { return theta.allFinite() && beta.allFinite() && camera.allFinite(); }
};

inline void check_dims(const KinematicTree& tree, const FitParams& params) {
  require(params.theta.size() == tree.pose_dim(), ErrorCode::InvalidInput,
          "params: theta has " + std::to_string(params.theta.size()) + " values, tree needs " +
              std::to_string(tree.pose_dim()));
  require(params.beta.size() == kShapeDim, ErrorCode::InvalidInput, "params: beta must have 10 values");
}

/// base_length + B beta. The root entry is reported but not checked.
inline Eigen::VectorXd bone_lengths(const KinematicTree& tree, const Eigen::VectorXd& beta) {
  require(beta.size() == kShapeDim, ErrorCode::InvalidInput, "bone_lengths: beta must have 10 values");
  require(beta.allFinite(), ErrorCode::InvalidInput, "bone_lengths: non-finite beta");
  Eigen::VectorXd lengths = tree.base_length() + tree.shape_basis() * beta;
  for (int j = 1; j < tree.joint_count(); ++j) {
    if (!(lengths[j] > 0.0)) {
      fail(ErrorCode::DegenerateShape, "bone " + std::to_string(j) + " has nonpositive length");
    }
  }
  return lengths;
}

/// Forward pass with the intermediates needed for reverse-mode gradients.
struct Posed {
  std::vector<Mat3> local;   // R(theta_j)
  std::vector<Mat3> global;  // product of R along the path root..j, inclusive
  Joints3 positions;
  Eigen::VectorXd lengths;
};

inline Posed pose_tree(const KinematicTree& tree, const FitParams& params) {
  check_dims(tree, params);
  const int n = tree.joint_count();
  Posed out;
  out.lengths = bone_lengths(tree, params.beta);
  out.local.resize(n);
  out.global.resize(n);
  out.positions.resize(n);
  for (int j = 0; j < n; ++j) {
    out.local[j] = rodrigues(params.joint_rotation(j));
    const int p = tree.parent()[j];
    if (p < 0) {
      out.global[j] = out.local[j];
      out.positions[j] = Vec3::Zero();
    } else {
      out.global[j] = out.global[p] * out.local[j];
      out.positions[j] = out.positions[p] + out.global[p] * (out.lengths[j] * tree.rest_offset()[j]);
    }
  }
  return out;
}

/// Joint positions. A joint's own rotation moves its descendants, not itself.
inline Joints3 forward_kinematics(const KinematicTree& tree, const FitParams& params) {
  return pose_tree(tree, params).positions;
}

/// Gradients of a scalar w.r.t. pose and shape given dL/dp_j for every joint.
struct FkGradient {
  Eigen::VectorXd theta;  // 3J
  Eigen::VectorXd beta;   // 10
};

inline FkGradient backprop_fk(const KinematicTree& tree, const Posed& posed, const FitParams& params,
                              const Joints3& joint_grad) {
  const int n = tree.joint_count();
  // Subtree sums of force and moment, accumulated leaf to root.
  std::vector<Vec3> force(joint_grad.begin(), joint_grad.end());
  std::vector<Vec3> moment(n);
  for (int j = 0; j < n; ++j) moment[j] = posed.positions[j].cross(joint_grad[j]);
  for (int j = n - 1; j >= 1; --j) {
    const int p = tree.parent()[j];
    force[p] += force[j];
    moment[p] += moment[j];
  }
  FkGradient g;
  g.theta.resize(3 * n);
  Eigen::VectorXd dlength = Eigen::VectorXd::Zero(n);
  for (int a = 0; a < n; ++a) {
    const Vec3 torque = moment[a] - posed.positions[a].cross(force[a]);
    const int p = tree.parent()[a];
    const Mat3 frame = p < 0 ? Mat3::Identity() : posed.global[p];
    g.theta.segment<3>(3 * a) = left_jacobian(params.joint_rotation(a)).transpose() * (frame.transpose() * torque);
    if (p >= 0) dlength[a] = (frame * tree.rest_offset()[a]).dot(force[a]);
  }
  g.beta = tree.shape_basis().transpose() * dlength;
  return g;
}

namespace detail {

struct BoneSpec {
  const char* name;
  int parent;
  double dx, dy, dz;
  double length;
};

// pelvis root, six-joint spine chain to the neck, head, two 4-joint arms
// (collar, shoulder, elbow, wrist) and two 4-joint legs (hip, knee, ankle, foot).
inline const std::array<BoneSpec, kDefaultJoints>& default_bones() {
  static const std::array<BoneSpec, kDefaultJoints> bones = {{
      {"pelvis", -1, 0.0, 1.0, 0.0, 0.0},
      {"l_hip", 0, 0.85, -0.55, 0.0, 0.11},
      {"l_knee", 1, 0.0, -1.0, 0.05, 0.40},
      {"l_ankle", 2, 0.0, -1.0, -0.05, 0.40},
      {"l_foot", 3, 0.0, -0.35, 0.94, 0.14},
      {"r_hip", 0, -0.85, -0.55, 0.0, 0.11},
      {"r_knee", 5, 0.0, -1.0, 0.05, 0.40},
      {"r_ankle", 6, 0.0, -1.0, -0.05, 0.40},
      {"r_foot", 7, 0.0, -0.35, 0.94, 0.14},
      {"spine1", 0, 0.0, 1.0, -0.05, 0.11},
      {"spine2", 9, 0.0, 1.0, 0.0, 0.12},
      {"spine3", 10, 0.0, 1.0, 0.03, 0.12},
      {"chest", 11, 0.0, 1.0, 0.0, 0.10},
      {"upper_chest", 12, 0.0, 1.0, 0.0, 0.08},
      {"neck", 13, 0.0, 1.0, 0.1, 0.10},
      {"head", 14, 0.0, 1.0, 0.0, 0.14},
      {"l_collar", 13, 1.0, 0.3, 0.0, 0.09},
      {"l_shoulder", 16, 1.0, 0.0, -0.1, 0.12},
      {"l_elbow", 17, 1.0, 0.0, 0.0, 0.28},
      {"l_wrist", 18, 1.0, 0.0, 0.05, 0.25},
      {"r_collar", 13, -1.0, 0.3, 0.0, 0.09},
      {"r_shoulder", 20, -1.0, 0.0, -0.1, 0.12},
      {"r_elbow", 21, -1.0, 0.0, 0.0, 0.28},
      {"r_wrist", 22, -1.0, 0.0, 0.05, 0.25},
  }};
  return bones;
}

}  // namespace detail

inline std::vector<std::string> default_joint_names() {
  std::vector<std::string> names;
  for (const auto& b : detail::default_bones()) names.emplace_back(b.name);
  return names;
}

inline constexpr std::uint64_t kDefaultTreeSeed = 0x5eed'2024'0001ULL;

/// Built-in 24-joint humanoid. Shape basis entries are drawn from a seeded
/// Gaussian scaled by bone length and shrunk until every bone stays positive
/// over |beta|_inf <= 3 with at least 25% margin.
inline KinematicTree default_tree(std::uint64_t seed = kDefaultTreeSeed) {
  const auto& bones = detail::default_bones();
  std::vector<int> parent;
  std::vector<Vec3> offsets;
  Eigen::VectorXd lengths(kDefaultJoints);
  ShapeBasis basis = ShapeBasis::Zero(kDefaultJoints, kShapeDim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < kDefaultJoints; ++j) {
    const auto& b = bones[j];
    parent.push_back(b.parent);
    offsets.push_back(Vec3(b.dx, b.dy, b.dz).normalized());
    lengths[j] = b.length;
    if (b.parent < 0) continue;
    for (int k = 0; k < kShapeDim; ++k) basis(j, k) = 0.04 * b.length * normal(rng);
    const double reach = 3.0 * basis.row(j).cwiseAbs().sum();
    if (reach > 0.75 * b.length) basis.row(j) *= 0.75 * b.length / reach;
  }
  return KinematicTree(std::move(parent), std::move(offsets), std::move(lengths), std::move(basis));
}

inline nlohmann::json to_json(const KinematicTree& tree) {
  nlohmann::json j;
  j["joint_count"] = tree.joint_count();
  j["parent"] = tree.parent();
  auto& offsets = j["rest_offset"] = nlohmann::json::array();
  for (const auto& o : tree.rest_offset()) offsets.push_back({o.x(), o.y(), o.z()});
  j["base_length"] = std::vector<double>(tree.base_length().data(), tree.base_length().data() + tree.joint_count());
  auto& basis = j["shape_basis"] = nlohmann::json::array();
  for (int r = 0; r < tree.joint_count(); ++r) {
    std::vector<double> row(kShapeDim);
    for (int k = 0; k < kShapeDim; ++k) row[k] = tree.shape_basis()(r, k);
    basis.push_back(row);
  }
  return j;
}

inline KinematicTree tree_from_json(const nlohmann::json& j) {
  try {
    const int n = j.at("joint_count").get<int>();
    auto parent = j.at("parent").get<std::vector<int>>();
    const auto& jo = j.at("rest_offset");
    const auto lengths = j.at("base_length").get<std::vector<double>>();
    const auto& jb = j.at("shape_basis");
    require(static_cast<int>(parent.size()) == n && static_cast<int>(jo.size()) == n &&
                static_cast<int>(lengths.size()) == n && static_cast<int>(jb.size()) == n,
            ErrorCode::InvalidInput, "tree json: array lengths disagree with joint_count");
    std::vector<Vec3> offsets;
    ShapeBasis basis(n, kShapeDim);
    for (int r = 0; r < n; ++r) {
      const auto o = jo[r].get<std::vector<double>>();
      require(o.size() == 3, ErrorCode::InvalidInput, "tree json: rest_offset rows need 3 values");
      offsets.emplace_back(o[0], o[1], o[2]);
      const auto row = jb[r].get<std::vector<double>>();
      require(row.size() == kShapeDim, ErrorCode::InvalidInput, "tree json: shape_basis rows need 10 values");
      for (int k = 0; k < kShapeDim; ++k) basis(r, k) = row[k];
    }
    return KinematicTree(std::move(parent), std::move(offsets),
                         Eigen::Map<const Eigen::VectorXd>(lengths.data(), n), std::move(basis));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidInput, std::string("tree json: ") + e.what());
  }
}

}  // namespace metafit
