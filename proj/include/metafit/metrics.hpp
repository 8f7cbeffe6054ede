#pragma once

// Joint-error metrics and rank correlation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "metafit/body_model.hpp"
#include "metafit/error.hpp"

namespace metafit {

/// Mean over joints of the Euclidean distance.
inline double mpjpe(const Joints3& pred, const Joints3& gt) {
  require(pred.size() == gt.size() && !gt.empty(), ErrorCode::InvalidInput, "mpjpe: joint counts differ");
  double sum = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) sum += (pred[j] - gt[j]).norm();
  return sum / static_cast<double>(gt.size());
}

struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * rotation * p + translation; }
};

/// Least-squares similarity taking `source` onto `target` (Umeyama).
inline Similarity procrustes(const Joints3& source, const Joints3& target) {
  require(source.size() == target.size(), ErrorCode::InvalidInput, "procrustes: joint counts differ");
  require(source.size() >= 3, ErrorCode::AlignmentDegenerate, "procrustes: need at least 3 points");
  const auto n = static_cast<Eigen::Index>(source.size());
  Eigen::Matrix3Xd x(3, n);
  Eigen::Matrix3Xd y(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x.col(i) = source[static_cast<std::size_t>(i)];
    y.col(i) = target[static_cast<std::size_t>(i)];
  }
  const Vec3 mx = x.rowwise().mean();
  const Vec3 my = y.rowwise().mean();
  x.colwise() -= mx;
  y.colwise() -= my;
  const double var_x = x.squaredNorm() / static_cast<double>(n);
  const Mat3 cov = y * x.transpose() / static_cast<double>(n);

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  // Rank below 2 leaves the rotation undetermined.
  const double tol = 1e-12 * std::max(1.0, sv[0]);
  if (var_x <= 1e-300 || sv[1] <= tol) fail(ErrorCode::AlignmentDegenerate, "procrustes: rank-deficient point set");

  Vec3 d = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) d[2] = -1.0;
  Similarity s;
  s.rotation = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  s.scale = sv.dot(d) / var_x;
  s.translation = my - s.scale * s.rotation * mx;
  return s;
}

/// mpjpe after the least-squares similarity alignment of pred onto gt. The
/// identity is kept as a candidate: least squares does not minimize the mean
/// distance, so under heavy noise the unaligned error can be lower.
inline double pa_mpjpe(const Joints3& pred, const Joints3& gt) {
  const Similarity s = procrustes(pred, gt);
  Joints3 aligned(pred.size());
  for (std::size_t j = 0; j < pred.size(); ++j) aligned[j] = s.apply(pred[j]);
  return std::min(mpjpe(aligned, gt), mpjpe(pred, gt));
}

/// Fractional ranks (ties share their average rank), 1-based.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorCode::InvalidInput, "correlation: need paired samples");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) fail(ErrorCode::UndefinedCorrelation, "correlation: constant input");
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation (Pearson on fractional ranks).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

/// Spearman correlation between per-task mean final sigma and per-task error.
inline double uncertainty_correlation(const std::vector<double>& mean_sigma, const std::vector<double>& errors) {
  require(mean_sigma.size() >= 10, ErrorCode::InvalidInput, "uncertainty_correlation: need at least 10 records");
  return spearman(mean_sigma, errors);
}

}  // namespace metafit
