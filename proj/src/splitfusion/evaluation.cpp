#include "splitfusion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace splitfusion {

namespace {

// greedy best-first timestamp matching, same convention as the dataset loader
std::vector<std::pair<size_t, size_t>> match_timestamps(const Trajectory& a, const Trajectory& b,
                                                        double tolerance) {
  struct Cand {
    double dt;
    size_t i, j;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < a.poses.size(); ++i) {
    for (size_t j = 0; j < b.poses.size(); ++j) {
      const double dt = std::abs(a.poses[i].first - b.poses[j].first);
      if (dt <= tolerance) cands.push_back({dt, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_a(a.poses.size(), false), used_b(b.poses.size(), false);
  std::vector<std::pair<size_t, size_t>> pairs;
  for (const Cand& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    pairs.push_back({c.i, c.j});
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace

RigidTransform align_trajectories(const Trajectory& estimated, const Trajectory& reference,
                                  double tolerance) {
  const auto pairs = match_timestamps(estimated, reference, tolerance);
  if (pairs.size() < 3)
    throw std::runtime_error("trajectory alignment needs >= 3 timestamp-matched pose pairs");

  // coincident positions align by the identity exactly (ate_rmse(T, T) == 0)
  bool coincident = true;
  for (const auto& [i, j] : pairs) {
    if (estimated.poses[i].second.translation != reference.poses[j].second.translation) {
      coincident = false;
      break;
    }
  }
  if (coincident) return RigidTransform::identity();

  Eigen::Vector3d mean_p = Eigen::Vector3d::Zero(), mean_q = Eigen::Vector3d::Zero();
  for (const auto& [i, j] : pairs) {
    mean_p += estimated.poses[i].second.translation;
    mean_q += reference.poses[j].second.translation;
  }
  mean_p /= static_cast<double>(pairs.size());
  mean_q /= static_cast<double>(pairs.size());

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (const auto& [i, j] : pairs) {
    H += (estimated.poses[i].second.translation - mean_p) *
         (reference.poses[j].second.translation - mean_q).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) D(2, 2) = -1.0;

  RigidTransform align;
  align.rotation = svd.matrixV() * D * svd.matrixU().transpose();
  align.translation = mean_q - align.rotation * mean_p;
  return align;
}

AteReport ate_rmse(const Trajectory& estimated, const Trajectory& reference, double tolerance) {
  AteReport report;
  report.alignment = align_trajectories(estimated, reference, tolerance);
  const auto pairs = match_timestamps(estimated, reference, tolerance);
  report.matched_pairs = pairs.size();

  double sq_sum = 0.0, sum = 0.0;
  for (const auto& [i, j] : pairs) {
    const Eigen::Vector3d aligned =
        report.alignment.apply(estimated.poses[i].second.translation);
    const double err = (aligned - reference.poses[j].second.translation).norm();
    report.errors.push_back(err);
    sq_sum += err * err;
    sum += err;
    report.max = std::max(report.max, err);
  }
  const double n = static_cast<double>(report.errors.size());
  report.rmse = std::sqrt(sq_sum / n);
  report.mean = sum / n;
  std::vector<double> sorted = report.errors;
  std::sort(sorted.begin(), sorted.end());
  report.median = sorted.size() % 2 == 1
                      ? sorted[sorted.size() / 2]
                      : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  return report;
}

}  // namespace splitfusion
