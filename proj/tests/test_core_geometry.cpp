#include <doctest.h>

#include <random>

#include "splitfusion/core_geometry.hpp"
#include "test_utils.hpp"

using namespace splitfusion;
using testutil::plane_frame;
using testutil::random_point;
using testutil::random_rigid;
using testutil::small_intrinsics;

TEST_CASE("backproject_pixel: principal point lies on the optical axis") {
  CameraIntrinsics K = small_intrinsics();
  const Eigen::Vector3d v = backproject_pixel(K, K.cx, K.cy, 2.0);
  CHECK(v.isApprox(Eigen::Vector3d(0, 0, 2.0), 1e-15));
}

TEST_CASE("backproject_pixel: TUM default intrinsics, hand-evaluated") {
  CameraIntrinsics K;  // 525 / 319.5 / 239.5 defaults
  const Eigen::Vector3d v = backproject_pixel(K, 419.5, 239.5, 1.0);
  CHECK(v.x() == doctest::Approx(100.0 / 525.0).epsilon(1e-12));
  CHECK(v.y() == doctest::Approx(0.0));
  CHECK(v.z() == doctest::Approx(1.0));
}

TEST_CASE("backproject: all-invalid depth gives an empty cloud") {
  DepthFrame f;
  f.intrinsics = small_intrinsics();
  f.depth = Image<double>(f.intrinsics.width, f.intrinsics.height, 0.0);
  CHECK(backproject(f).size() == 0);
}

TEST_CASE("backproject/project round trip recovers the pixel within 0.5 px") {
  const CameraIntrinsics K = small_intrinsics();
  const DepthFrame f = plane_frame(K, Eigen::Vector3d(0.2, -0.1, 1.0).normalized(), 1.3);
  const PointCloud cloud = backproject(f);
  REQUIRE(cloud.size() > 0);
  for (size_t i = 0; i < cloud.size(); ++i) {
    double u, v;
    REQUIRE(project_point(K, cloud.vertices[i], u, v));
    CHECK(std::abs(u - cloud.pixel_origin[i][1]) < 0.5);
    CHECK(std::abs(v - cloud.pixel_origin[i][0]) < 0.5);
  }
}

TEST_CASE("compute_normals: fronto-parallel plane gives (0,0,-1)") {
  const CameraIntrinsics K = small_intrinsics();
  const DepthFrame f = plane_frame(K, {0, 0, 1}, 1.0);
  const auto nmap = compute_normal_map(f);
  int checked = 0;
  for (int r = 1; r < K.height - 1; ++r) {
    for (int c = 1; c < K.width - 1; ++c) {
      REQUIRE(nmap.at(r, c).isApprox(Eigen::Vector3d(0, 0, -1), 1e-9));
      ++checked;
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("compute_normals: isolated pixel has no normal") {
  DepthFrame f;
  f.intrinsics = small_intrinsics();
  f.depth = Image<double>(f.intrinsics.width, f.intrinsics.height, 0.0);
  f.depth.at(10, 10) = 1.0f;
  const auto nmap = compute_normal_map(f);
  CHECK(nmap.at(10, 10).norm() == 0.0);
}

TEST_CASE("compute_normals: tilted planes match the analytic normal within 1e-3") {
  const CameraIntrinsics K = small_intrinsics();
  std::mt19937 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::Vector3d n = (Eigen::Vector3d(0, 0, 1) + 0.7 * random_point(rng)).normalized();
    if (n.z() < 0.5) n = Eigen::Vector3d(0, 0, 1);
    const DepthFrame f = plane_frame(K, n, 1.2);
    const auto vmap = compute_vertex_map(f);
    const auto nmap = compute_normal_map(f);
    const Eigen::Vector3d expected = -n;  // oriented toward the camera
    for (int r = 2; r < K.height - 2; ++r) {
      for (int c = 2; c < K.width - 2; ++c) {
        if (nmap.at(r, c).norm() == 0.0) continue;
        bool interior = true;
        for (const auto [dr, dc] : {std::pair{0, 1}, {0, -1}, {1, 0}, {-1, 0}})
          if (vmap.at(r + dr, c + dc).z() <= 0) interior = false;
        if (!interior) continue;
        REQUIRE((nmap.at(r, c) - expected).norm() < 1e-3);
      }
    }
  }
}

TEST_CASE("45-degree plane normals") {
  const CameraIntrinsics K = small_intrinsics();
  const Eigen::Vector3d n = Eigen::Vector3d(1, 0, 1).normalized();
  const DepthFrame f = plane_frame(K, n, 1.0);
  const auto nmap = compute_normal_map(f);
  int checked = 0;
  for (int r = 2; r < K.height - 2; ++r) {
    for (int c = 2; c < K.width - 2; ++c) {
      if (nmap.at(r, c).norm() == 0.0) continue;
      REQUIRE((nmap.at(r, c) + n).norm() < 1e-3);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("rigid transform identity and inverse") {
  std::mt19937 rng(7);
  const Eigen::Vector3d p = random_point(rng);
  CHECK(RigidTransform::identity().apply(p).isApprox(p, 1e-15));

  RigidTransform t;
  t.translation = {0.3, -0.2, 0.9};
  const RigidTransform ti = invert(t);
  CHECK(ti.translation.isApprox(-t.translation, 1e-15));
}

TEST_CASE("rigid transform group laws on random samples") {
  std::mt19937 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const RigidTransform a = random_rigid(rng);
    const RigidTransform b = random_rigid(rng);
    const RigidTransform c = random_rigid(rng);
    const Eigen::Vector3d p = random_point(rng);

    // composition vs sequential application
    CHECK((compose(a, b).apply(p) - a.apply(b.apply(p))).norm() < 1e-9);
    // associativity
    const Eigen::Vector3d lhs = compose(compose(a, b), c).apply(p);
    const Eigen::Vector3d rhs = compose(a, compose(b, c)).apply(p);
    CHECK((lhs - rhs).norm() < 1e-9);
    // inverse
    const RigidTransform id = compose(a, invert(a));
    CHECK((id.apply(p) - p).norm() < 1e-9);
    CHECK(a.is_rigid(1e-9));
  }
}

TEST_CASE("orthonormalize_rotation projects noisy matrices back to SO(3)") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-0.01, 0.01);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::Matrix3d noisy = testutil::random_rotation(rng);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) noisy(i, j) += u(rng);
    const Eigen::Matrix3d r = orthonormalize_rotation(noisy);
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("mask iou") {
  PixelMask a(4, 4), b(4, 4);
  a.set(0, 0);
  a.set(0, 1);
  b.set(0, 1);
  b.set(0, 2);
  CHECK(mask_iou(a, b) == doctest::Approx(1.0 / 3.0));
}
