#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "splitfusion/dataset_io.hpp"
#include "splitfusion/synthetic_scenes.hpp"
#include "test_utils.hpp"

namespace fs = std::filesystem;
using namespace splitfusion;

namespace {

SceneScript plane_scene(double z = 1.0) {
  SceneScript s;
  s.frames = 3;
  s.intrinsics = testutil::small_intrinsics(64, 48, 60.0);
  ScenePrimitive p;
  p.type = PrimitiveType::Plane;
  p.background = true;
  p.pose.translation = {0, 0, z};
  p.half_extent2 = {5.0, 5.0};
  s.primitives = {p};
  return s;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("single plane at z=1 renders constant depth 1.0") {
  const RenderedFrame f = render(plane_scene(1.0), 0);
  for (int r = 0; r < f.frame.depth.height; ++r)
    for (int c = 0; c < f.frame.depth.width; ++c)
      CHECK(f.frame.depth.at(r, c) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sphere behind the camera renders nothing") {
  SceneScript s = plane_scene();
  s.primitives.clear();
  ScenePrimitive sphere;
  sphere.type = PrimitiveType::Sphere;
  sphere.klass = "sports ball";
  sphere.pose.translation = {0, 0, -2.0};
  sphere.radius = 0.3;
  s.primitives = {sphere};
  const RenderedFrame f = render(s, 0);
  for (double d : f.frame.depth.data) CHECK(d == 0.0f);
}

TEST_CASE("near clip suppresses depth closer than 0.5 m") {
  const RenderedFrame f = render(plane_scene(0.4), 0);
  for (double d : f.frame.depth.data) CHECK(d == 0.0f);
}

TEST_CASE("sheet with zero amplitude equals a static plane") {
  SceneScript plane = plane_scene(1.3);
  SceneScript sheet = plane;
  sheet.primitives[0].type = PrimitiveType::Sheet;
  sheet.primitives[0].amplitude = 0.0;
  sheet.primitives[0].temporal_freq = 0.2;
  for (int f = 0; f < plane.frames; ++f) {
    const RenderedFrame a = render(plane, f);
    const RenderedFrame b = render(sheet, f);
    for (size_t i = 0; i < a.frame.depth.data.size(); ++i)
      CHECK(a.frame.depth.data[i] == doctest::Approx(b.frame.depth.data[i]).epsilon(1e-9));
  }
}

TEST_CASE("rendered depth satisfies the surface equation to 1e-9") {
  SceneScript s;
  s.frames = 4;
  s.intrinsics = testutil::small_intrinsics(48, 36, 45.0);
  s.camera.type = CameraPath::Type::XyzShake;
  s.camera.amplitude = {0.03, 0.02, 0.04};

  ScenePrimitive plane;
  plane.type = PrimitiveType::Plane;
  plane.background = true;
  plane.pose.translation = {0, 0, 2.0};
  plane.pose.rotation = Eigen::AngleAxisd(0.3, Eigen::Vector3d::UnitX()).toRotationMatrix();
  plane.half_extent2 = {4, 4};

  ScenePrimitive sphere;
  sphere.type = PrimitiveType::Sphere;
  sphere.klass = "sports ball";
  sphere.pose.translation = {0.2, 0.1, 1.2};
  sphere.radius = 0.25;

  ScenePrimitive sheet;
  sheet.type = PrimitiveType::Sheet;
  sheet.klass = "person";
  sheet.pose.translation = {-0.35, 0, 1.1};
  sheet.half_extent2 = {0.25, 0.3};
  sheet.amplitude = 0.03;
  sheet.spatial_freq = 2.0;
  sheet.temporal_freq = 0.21;

  s.primitives = {plane, sphere, sheet};

  for (int fi = 0; fi < s.frames; ++fi) {
    const RenderedFrame rf = render(s, fi);
    const RigidTransform cam = rf.camera_pose;
    int hits = 0;
    for (int r = 0; r < s.intrinsics.height; ++r) {
      for (int c = 0; c < s.intrinsics.width; ++c) {
        const double d = rf.frame.depth.at(r, c);
        if (d <= 0) continue;
        const Eigen::Vector3d p_cam = backproject_pixel(s.intrinsics, c, r, d);
        const Eigen::Vector3d p_world = cam.apply(p_cam);
        CHECK(scene_surface_distance(s, p_world, fi) < 1e-9);
        ++hits;
      }
    }
    CHECK(hits > 500);
  }
}

TEST_CASE("mask partition: every valid pixel carries exactly one instance id") {
  SceneScript s = plane_scene();
  ScenePrimitive sphere;
  sphere.type = PrimitiveType::Sphere;
  sphere.klass = "sports ball";
  sphere.pose.translation = {0, 0, 0.9};
  sphere.radius = 0.2;
  s.primitives.push_back(sphere);
  const RenderedFrame f = render(s, 0);
  for (int r = 0; r < f.frame.depth.height; ++r) {
    for (int c = 0; c < f.frame.depth.width; ++c) {
      if (f.frame.depth.at(r, c) > 0) {
        const uint16_t id = f.masks.labels.at(r, c);
        if (id != 0) CHECK(f.masks.classes.count(id) == 1);
      } else {
        CHECK(f.masks.labels.at(r, c) == 0);
      }
    }
  }
}

TEST_CASE("moving rigid primitive follows its analytic pose") {
  SceneScript s = plane_scene(3.0);
  ScenePrimitive box;
  box.type = PrimitiveType::Box;
  box.klass = "suitcase";
  box.pose.translation = {0, 0, 1.5};
  box.half_extent3 = {0.2, 0.15, 0.1};
  box.linear_velocity = {0.01, 0, 0};
  box.angular_velocity = {0, 0.02, 0};
  s.primitives.push_back(box);
  s.frames = 5;

  for (int fi = 0; fi < s.frames; ++fi) {
    const RigidTransform pose = primitive_pose(s.primitives[1], fi);
    CHECK((pose.translation - Eigen::Vector3d(0.01 * fi, 0, 1.5)).norm() < 1e-12);
    const Eigen::AngleAxisd aa(pose.rotation);
    CHECK(aa.angle() == doctest::Approx(0.02 * fi).epsilon(1e-9));
  }
}

TEST_CASE("export produces a loadable TUM dataset with matching ground truth") {
  SceneScript s = plane_scene();
  s.frames = 5;
  s.camera.type = CameraPath::Type::XyzShake;
  s.camera.amplitude = {0.05, 0.04, 0.03};
  s.noise_sigma = 0.002;
  s.seed = 11;

  const fs::path dir = fs::temp_directory_path() / "splitfusion_test_export";
  fs::remove_all(dir);
  export_dataset(s, dir.string());

  const SequenceManifest m = load_tum_sequence(dir.string());
  CHECK(m.entries.size() == 5);
  CHECK(m.intrinsics.fx == doctest::Approx(s.intrinsics.fx));

  const Trajectory gt = read_trajectory((dir / "groundtruth.txt").string());
  REQUIRE(gt.size() == 5);
  for (int f = 0; f < 5; ++f) {
    const RigidTransform expected = s.camera.pose(f, s.frames);
    CHECK((gt.poses[f].second.translation - expected.translation).norm() < 1e-9);
    CHECK((gt.poses[f].second.rotation - expected.rotation).cwiseAbs().maxCoeff() < 1e-8);
  }

  // depth values round-trip through the 16-bit quantization
  const DepthFrame frame = load_frame(m, 0);
  const RenderedFrame rf = render(s, 0);
  for (size_t i = 0; i < frame.depth.data.size(); ++i) {
    if (rf.frame.depth.data[i] <= 0) continue;
    CHECK(std::abs(frame.depth.data[i] - rf.frame.depth.data[i]) <=
          0.5f / static_cast<float>(s.intrinsics.depth_scale) + 1e-6f);
  }
}

TEST_CASE("export with a fixed seed is byte-identical on repeat") {
  SceneScript s = plane_scene();
  s.frames = 2;
  s.noise_sigma = 0.003;
  s.seed = 99;
  const fs::path a = fs::temp_directory_path() / "splitfusion_test_det_a";
  const fs::path b = fs::temp_directory_path() / "splitfusion_test_det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  export_dataset(s, a.string());
  export_dataset(s, b.string());
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    CHECK(read_bytes(entry.path()) == read_bytes(b / rel));
  }
}

TEST_CASE("warp samples: sheet is flat at frame 0 and deformed later") {
  SceneScript s = plane_scene();
  ScenePrimitive sheet;
  sheet.type = PrimitiveType::Sheet;
  sheet.klass = "person";
  sheet.pose.translation = {0, 0, 1.0};
  sheet.half_extent2 = {0.4, 0.3};
  sheet.amplitude = 0.02;
  sheet.spatial_freq = 1.5;
  sheet.temporal_freq = 0.1;
  s.primitives.push_back(sheet);
  s.frames = 5;

  const auto samples0 = warp_samples(s, 1, 0, 6);
  for (const auto& [canon, now] : samples0) CHECK((canon - now).norm() < 1e-12);

  const auto samples2 = warp_samples(s, 1, 2, 6);
  double max_disp = 0.0;
  for (const auto& [canon, now] : samples2) max_disp = std::max(max_disp, (canon - now).norm());
  CHECK(max_disp > 0.005);
  CHECK(max_disp <= 0.02 + 1e-9);
}
