#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "splitfusion/dataset_io.hpp"
#include "splitfusion/png_io.hpp"
#include "test_utils.hpp"

namespace fs = std::filesystem;
using namespace splitfusion;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("splitfusion_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_index(const fs::path& path, const std::vector<std::pair<double, std::string>>& rows) {
  std::ofstream out(path);
  out << "# test index\n";
  for (const auto& [ts, rel] : rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", ts);
    out << buf << " " << rel << "\n";
  }
}

void write_dummy_png16(const fs::path& path, int w = 8, int h = 6, uint16_t value = 5000) {
  write_png16(path.string(), Image<uint16_t>(w, h, value));
}

void write_dummy_rgb(const fs::path& path, int w = 8, int h = 6) {
  write_png_rgb(path.string(), Image<std::array<uint8_t, 3>>(w, h, {10, 20, 30}));
}

// brute-force greedy matcher used as the pairing oracle
std::vector<std::pair<int, int>> oracle_pairs(const std::vector<double>& a,
                                              const std::vector<double>& b, double tol) {
  struct C {
    double dt;
    int i, j;
  };
  std::vector<C> all;
  for (int i = 0; i < (int)a.size(); ++i)
    for (int j = 0; j < (int)b.size(); ++j)
      if (std::abs(a[i] - b[j]) <= tol) all.push_back({std::abs(a[i] - b[j]), i, j});
  std::sort(all.begin(), all.end(), [](const C& x, const C& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> ua(a.size()), ub(b.size());
  std::vector<std::pair<int, int>> out;
  for (const C& c : all) {
    if (ua[c.i] || ub[c.j]) continue;
    ua[c.i] = ub[c.j] = true;
    out.push_back({c.i, c.j});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("tum loader pairs frames within tolerance and drops the rest") {
  const fs::path dir = fresh_dir("tum_pairing");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "rgb");
  // depth 1.000 pairs with rgb 1.005; depth 2.000 has no partner within 0.02
  write_index(dir / "depth.txt", {{1.000, "depth/a.png"}, {2.000, "depth/b.png"}});
  write_index(dir / "rgb.txt", {{1.005, "rgb/a.png"}, {2.500, "rgb/b.png"}});
  for (const char* p : {"depth/a.png", "depth/b.png"}) write_dummy_png16(dir / p);
  for (const char* p : {"rgb/a.png", "rgb/b.png"}) write_dummy_rgb(dir / p);

  CameraIntrinsics K = testutil::small_intrinsics(8, 6);
  const SequenceManifest m = load_tum_sequence(dir.string(), 0.02, K);
  REQUIRE(m.entries.size() == 1);
  CHECK(m.entries[0].timestamp == doctest::Approx(1.000));
}

TEST_CASE("tum loader errors: missing index, zero pairs") {
  const fs::path dir = fresh_dir("tum_errors");
  CHECK_THROWS(load_tum_sequence(dir.string()));
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "rgb");
  write_index(dir / "depth.txt", {{1.0, "depth/a.png"}});
  write_index(dir / "rgb.txt", {{2.0, "rgb/a.png"}});
  write_dummy_png16(dir / "depth/a.png");
  write_dummy_rgb(dir / "rgb/a.png");
  CHECK_THROWS(load_tum_sequence(dir.string()));  // nothing within tolerance
}

TEST_CASE("tum pairing equals the brute-force oracle on interleaved entries") {
  const fs::path dir = fresh_dir("tum_oracle");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "rgb");
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  std::vector<double> dts, rts;
  std::vector<std::pair<double, std::string>> drows, rrows;
  for (int i = 0; i < 10; ++i) {
    const double d = 1.0 + 0.1 * i;
    const double r = d + jitter(rng);
    dts.push_back(d);
    rts.push_back(r);
    const std::string dn = "depth/" + std::to_string(i) + ".png";
    const std::string rn = "rgb/" + std::to_string(i) + ".png";
    drows.push_back({d, dn});
    rrows.push_back({r, rn});
    write_dummy_png16(dir / dn);
    write_dummy_rgb(dir / rn);
  }
  std::sort(rrows.begin(), rrows.end());
  std::sort(rts.begin(), rts.end());
  write_index(dir / "depth.txt", drows);
  write_index(dir / "rgb.txt", rrows);

  const SequenceManifest m =
      load_tum_sequence(dir.string(), 0.02, testutil::small_intrinsics(8, 6));
  const auto expected = oracle_pairs(dts, rts, 0.02);
  REQUIRE(m.entries.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i)
    CHECK(m.entries[i].timestamp == doctest::Approx(dts[expected[i].first]));
}

TEST_CASE("mask loading is total and handles absent/degenerate tables") {
  const fs::path dir = fresh_dir("masks");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "masks");
  write_index(dir / "depth.txt", {{1.0, "depth/a.png"}, {2.0, "depth/b.png"}});
  write_index(dir / "rgb.txt", {{1.0, "rgb/a.png"}, {2.0, "rgb/b.png"}});
  for (const char* p : {"depth/a.png", "depth/b.png"}) write_dummy_png16(dir / p);
  for (const char* p : {"rgb/a.png", "rgb/b.png"}) write_dummy_rgb(dir / p);

  // frame 1: one person instance; frame 2: no mask file at all
  Image<uint16_t> labels(8, 6, 0);
  labels.at(2, 2) = 1;
  write_png16((dir / "masks/1.000000.png").string(), labels);
  std::ofstream((dir / "masks/1.000000.json"))
      << nlohmann::json{{"instances", {{"1", "person"}, {"7", "cat"}}}}.dump();

  const SequenceManifest m =
      load_tum_sequence(dir.string(), 0.02, testutil::small_intrinsics(8, 6));
  const auto masks = load_masks(m, (dir / "masks").string());
  REQUIRE(masks.size() == 2);  // total: one mask frame per manifest entry
  CHECK(masks[0].labels.at(2, 2) == 1);
  CHECK(masks[0].classes.at(1) == "person");
  CHECK(masks[0].classes.count(7) == 1);  // id absent from the image is accepted
  CHECK(masks[1].all_background());
}

TEST_CASE("mask with wrong dimensions names the frame") {
  const fs::path dir = fresh_dir("mask_dims");
  fs::create_directories(dir / "masks");
  write_png16((dir / "masks/3.500000.png").string(), Image<uint16_t>(4, 4, 0));
  SequenceEntry e;
  e.timestamp = 3.5;
  e.mask_path = (dir / "masks/3.500000.png").string();
  e.mask_meta_path = (dir / "masks/3.500000.json").string();
  try {
    load_mask_frame(e, 8, 6);
    FAIL("expected an error");
  } catch (const std::exception& ex) {
    CHECK(std::string(ex.what()).find("3.5") != std::string::npos);
  }
}

TEST_CASE("mask image with id missing from the table is rejected") {
  const fs::path dir = fresh_dir("mask_table");
  fs::create_directories(dir / "masks");
  Image<uint16_t> labels(8, 6, 0);
  labels.at(0, 0) = 3;
  write_png16((dir / "masks/1.000000.png").string(), labels);
  std::ofstream((dir / "masks/1.000000.json"))
      << nlohmann::json{{"instances", {{"1", "person"}}}}.dump();
  SequenceEntry e;
  e.timestamp = 1.0;
  e.mask_path = (dir / "masks/1.000000.png").string();
  e.mask_meta_path = (dir / "masks/1.000000.json").string();
  CHECK_THROWS(load_mask_frame(e, 8, 6));
}

TEST_CASE("empty mesh writes a valid PLY with zero vertices") {
  const fs::path dir = fresh_dir("ply");
  TriangleMesh mesh;
  write_mesh(mesh, (dir / "empty.ply").string());
  std::ifstream in(dir / "empty.ply");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("element vertex 0") != std::string::npos);
  CHECK(text.find("end_header") != std::string::npos);
}

TEST_CASE("identity pose at t=0 formats as the canonical TUM line") {
  const fs::path dir = fresh_dir("traj_identity");
  Trajectory traj;
  traj.poses.emplace_back(0.0, RigidTransform::identity());
  write_trajectory(traj, (dir / "t.txt").string());
  std::ifstream in(dir / "t.txt");
  std::string line;
  std::getline(in, line);
  CHECK(line == "0.000000 0 0 0 0 0 0 1");
}

TEST_CASE("trajectory write/read round trip within 1e-6") {
  const fs::path dir = fresh_dir("traj_roundtrip");
  std::mt19937 rng(99);
  Trajectory traj;
  for (int i = 0; i < 25; ++i) traj.poses.emplace_back(0.1 * i, testutil::random_rigid(rng));
  const std::string path = (dir / "t.txt").string();
  write_trajectory(traj, path);
  const Trajectory back = read_trajectory(path);
  REQUIRE(back.size() == traj.size());
  for (size_t i = 0; i < traj.size(); ++i) {
    CHECK(std::abs(back.poses[i].first - traj.poses[i].first) < 1e-6);
    CHECK((back.poses[i].second.translation - traj.poses[i].second.translation).norm() < 1e-6);
    CHECK((back.poses[i].second.rotation - traj.poses[i].second.rotation).cwiseAbs().maxCoeff() <
          1e-6);
  }
}

TEST_CASE("png16 round trip is exact") {
  const fs::path dir = fresh_dir("png16");
  Image<uint16_t> img(13, 7, 0);
  std::mt19937 rng(3);
  for (auto& v : img.data) v = static_cast<uint16_t>(rng());
  write_png16((dir / "x.png").string(), img);
  const Image<uint16_t> back = read_png16((dir / "x.png").string());
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.data == img.data);
}
