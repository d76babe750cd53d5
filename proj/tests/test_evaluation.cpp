#include <doctest.h>

#include <random>

#include <Eigen/Geometry>

#include "splitfusion/evaluation.hpp"
#include "test_utils.hpp"

using namespace splitfusion;
using testutil::random_point;
using testutil::random_rigid;

namespace {

Trajectory random_trajectory(std::mt19937& rng, int n) {
  Trajectory t;
  for (int i = 0; i < n; ++i) t.poses.emplace_back(0.1 * i, random_rigid(rng));
  return t;
}

Trajectory transform_all(const Trajectory& t, const RigidTransform& T) {
  Trajectory out = t;
  for (auto& [ts, pose] : out.poses) pose = compose(T, pose);
  return out;
}

// independent reference: Eigen's closed-form umeyama (no scale)
double umeyama_rmse(const Trajectory& est, const Trajectory& ref) {
  const int n = static_cast<int>(std::min(est.size(), ref.size()));
  Eigen::MatrixXd src(3, n), dst(3, n);
  for (int i = 0; i < n; ++i) {
    src.col(i) = est.poses[i].second.translation;
    dst.col(i) = ref.poses[i].second.translation;
  }
  const Eigen::Matrix4d T = Eigen::umeyama(src, dst, false);
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d aligned = T.block<3, 3>(0, 0) * src.col(i) + T.block<3, 1>(0, 3);
    sq += (aligned - dst.col(i)).squaredNorm();
  }
  return std::sqrt(sq / n);
}

}  // namespace

TEST_CASE("identical trajectories align to identity and rmse 0") {
  std::mt19937 rng(1);
  const Trajectory t = random_trajectory(rng, 12);
  const RigidTransform a = align_trajectories(t, t);
  CHECK((a.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(a.translation.norm() < 1e-9);
  const AteReport r = ate_rmse(t, t);
  CHECK(r.rmse == 0.0);
  CHECK(r.max == 0.0);
}

TEST_CASE("constant position offset is recovered as the negative translation") {
  std::mt19937 rng(2);
  Trajectory ref = random_trajectory(rng, 10);
  Trajectory est = ref;
  const Eigen::Vector3d t(0.2, -0.1, 0.05);
  for (auto& [ts, pose] : est.poses) pose.translation += t;
  const RigidTransform a = align_trajectories(est, ref);
  CHECK((a.translation + t).norm() < 1e-9);
  CHECK((a.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("a random rigid perturbation is inverted within 1e-9") {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory ref = random_trajectory(rng, 15);
    const RigidTransform P = random_rigid(rng);
    const Trajectory est = transform_all(ref, P);
    const RigidTransform a = align_trajectories(est, ref);
    const RigidTransform should_be_id = compose(a, P);
    CHECK((should_be_id.rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(should_be_id.translation.norm() < 1e-9);
    CHECK(ate_rmse(est, ref).rmse < 1e-9);
  }
}

TEST_CASE("alternating offsets on a collinear path: rmse equals the hand value") {
  Trajectory ref, est;
  const double xs[4] = {-1.5, -0.5, 0.5, 1.5};
  const double sign[4] = {1, -1, -1, 1};
  for (int i = 0; i < 4; ++i) {
    RigidTransform r;
    r.translation = {xs[i], 0, 0};
    ref.poses.emplace_back(0.1 * i, r);
    RigidTransform e = r;
    e.translation.y() += 0.01 * sign[i];
    est.poses.emplace_back(0.1 * i, e);
  }
  const AteReport rep = ate_rmse(est, ref);
  CHECK(rep.rmse == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(rep.mean == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(rep.max == doctest::Approx(0.01).epsilon(1e-9));
}

TEST_CASE("fewer than 3 matches is an error") {
  std::mt19937 rng(4);
  const Trajectory a = random_trajectory(rng, 2);
  const Trajectory b = random_trajectory(rng, 2);
  CHECK_THROWS(align_trajectories(a, b));

  // timestamps too far apart
  Trajectory c = random_trajectory(rng, 10);
  Trajectory d = c;
  for (auto& [ts, pose] : d.poses) ts += 10.0;
  CHECK_THROWS(ate_rmse(c, d));
}

TEST_CASE("ate matches the umeyama reference on random pairs") {
  std::mt19937 rng(5);
  std::normal_distribution<double> noise(0.0, 0.02);
  for (int trial = 0; trial < 50; ++trial) {
    const Trajectory ref = random_trajectory(rng, 20);
    Trajectory est = transform_all(ref, random_rigid(rng));
    for (auto& [ts, pose] : est.poses)
      pose.translation += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    const AteReport rep = ate_rmse(est, ref);
    CHECK(rep.rmse == doctest::Approx(umeyama_rmse(est, ref)).epsilon(1e-9));
  }
}

TEST_CASE("invariance: shared rigid pre-transform leaves the rmse unchanged") {
  std::mt19937 rng(6);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory ref = random_trajectory(rng, 15);
    Trajectory est = ref;
    for (auto& [ts, pose] : est.poses)
      pose.translation += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    const double base = ate_rmse(est, ref).rmse;
    const RigidTransform T = random_rigid(rng);
    const double moved = ate_rmse(transform_all(est, T), transform_all(ref, T)).rmse;
    CHECK(moved == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("rmse is at least the mean error") {
  std::mt19937 rng(7);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory ref = random_trajectory(rng, 12);
    Trajectory est = ref;
    for (auto& [ts, pose] : est.poses)
      pose.translation += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    const AteReport rep = ate_rmse(est, ref);
    CHECK(rep.rmse >= rep.mean - 1e-12);
    CHECK(rep.max >= rep.median);
  }
}
