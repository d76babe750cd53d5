#include "splitfusion/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "splitfusion/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace splitfusion {

namespace {

struct IndexedFile {
  double timestamp;
  std::string path;
};

std::vector<IndexedFile> read_index(const fs::path& index_path, const fs::path& root) {
  std::ifstream in(index_path);
  if (!in) throw std::runtime_error("missing index file: " + index_path.string());
  std::vector<IndexedFile> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double ts;
    std::string rel;
    if (!(ss >> ts >> rel)) continue;
    out.push_back({ts, (root / rel).string()});
  }
  std::sort(out.begin(), out.end(),
            [](const IndexedFile& a, const IndexedFile& b) { return a.timestamp < b.timestamp; });
  return out;
}

// Greedy best-first pairing: smallest |dt| wins, each entry used once.
std::vector<std::pair<size_t, size_t>> associate(const std::vector<IndexedFile>& a,
                                                 const std::vector<IndexedFile>& b,
                                                 double tolerance) {
  struct Cand {
    double dt;
    size_t i, j;
  };
  std::vector<Cand> cands;
  for (size_t i = 0; i < a.size(); ++i) {
    // b is sorted; only neighbors within tolerance can match
    auto lo = std::lower_bound(b.begin(), b.end(), a[i].timestamp - tolerance,
                               [](const IndexedFile& f, double t) { return f.timestamp < t; });
    for (auto it = lo; it != b.end() && it->timestamp <= a[i].timestamp + tolerance; ++it) {
      cands.push_back({std::abs(it->timestamp - a[i].timestamp), i,
                       static_cast<size_t>(it - b.begin())});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  std::vector<std::pair<size_t, size_t>> pairs;
  for (const Cand& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    pairs.push_back({c.i, c.j});
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

void read_intrinsics_json(const fs::path& path, CameraIntrinsics& K) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  json j = json::parse(in);
  K.fx = j.at("fx").get<double>();
  K.fy = j.at("fy").get<double>();
  K.cx = j.at("cx").get<double>();
  K.cy = j.at("cy").get<double>();
  K.width = j.at("width").get<int>();
  K.height = j.at("height").get<int>();
  if (j.contains("depth_scale")) K.depth_scale = j["depth_scale"].get<double>();
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

SequenceManifest load_tum_sequence(const std::string& root, double tolerance,
                                   const CameraIntrinsics& fallback) {
  const fs::path rootp(root);
  const auto depth = read_index(rootp / "depth.txt", rootp);
  const auto rgb = read_index(rootp / "rgb.txt", rootp);
  const auto pairs = associate(depth, rgb, tolerance);
  if (pairs.empty()) throw std::runtime_error("no depth/rgb pairs within tolerance in " + root);

  SequenceManifest m;
  m.intrinsics = fallback;
  if (fs::exists(rootp / "intrinsics.json")) read_intrinsics_json(rootp / "intrinsics.json", m.intrinsics);

  for (const auto& [di, ri] : pairs) {
    SequenceEntry e;
    e.timestamp = depth[di].timestamp;
    e.depth_path = depth[di].path;
    e.color_path = rgb[ri].path;
    if (!fs::exists(e.depth_path)) throw std::runtime_error("missing depth image: " + e.depth_path);
    if (!fs::exists(e.color_path)) throw std::runtime_error("missing color image: " + e.color_path);
    m.entries.push_back(std::move(e));
  }
  for (size_t i = 1; i < m.entries.size(); ++i) {
    if (m.entries[i].timestamp <= m.entries[i - 1].timestamp)
      throw std::runtime_error("timestamps not strictly increasing in " + root);
  }
  return m;
}

void attach_masks(SequenceManifest& manifest, const std::string& mask_dir, double tolerance) {
  if (mask_dir.empty() || !fs::exists(mask_dir)) return;
  std::vector<IndexedFile> masks;
  for (const auto& de : fs::directory_iterator(mask_dir)) {
    if (de.path().extension() != ".png") continue;
    try {
      masks.push_back({std::stod(de.path().stem().string()), de.path().string()});
    } catch (const std::exception&) {
      continue;  // non-timestamp filenames ignored
    }
  }
  std::sort(masks.begin(), masks.end(),
            [](const IndexedFile& a, const IndexedFile& b) { return a.timestamp < b.timestamp; });
  for (SequenceEntry& e : manifest.entries) {
    double best = tolerance;
    const IndexedFile* hit = nullptr;
    for (const auto& mf : masks) {
      const double dt = std::abs(mf.timestamp - e.timestamp);
      if (dt <= best) {
        best = dt;
        hit = &mf;
      }
    }
    if (hit) {
      e.mask_path = hit->path;
      e.mask_meta_path = fs::path(hit->path).replace_extension(".json").string();
    }
  }
}

DepthFrame load_frame(const SequenceManifest& manifest, size_t index) {
  const SequenceEntry& e = manifest.entries.at(index);
  DepthFrame f;
  f.timestamp = e.timestamp;
  f.intrinsics = manifest.intrinsics;

  const Image<uint16_t> raw = read_png16(e.depth_path);
  f.depth = Image<double>(raw.width, raw.height, 0.0);
  const double inv_scale = 1.0 / manifest.intrinsics.depth_scale;
  for (size_t i = 0; i < raw.data.size(); ++i) f.depth.data[i] = raw.data[i] * inv_scale;

  if (!e.color_path.empty() && fs::exists(e.color_path)) f.color = read_png_rgb(e.color_path);

  if (f.depth.width != manifest.intrinsics.width || f.depth.height != manifest.intrinsics.height)
    throw std::runtime_error("depth dimensions do not match intrinsics: " + e.depth_path);
  return f;
}

InstanceMaskFrame load_mask_frame(const SequenceEntry& entry, int width, int height) {
  InstanceMaskFrame mf;
  if (entry.mask_path.empty()) {
    mf.labels = Image<uint16_t>(width, height, 0);
    return mf;
  }
  mf.labels = read_png16(entry.mask_path);
  if (mf.labels.width != width || mf.labels.height != height) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", entry.timestamp);
    throw std::runtime_error(std::string("mask dimensions mismatch at frame ") + buf + ": " +
                             entry.mask_path);
  }
  std::ifstream in(entry.mask_meta_path);
  if (in) {
    json j = json::parse(in);
    for (const auto& [key, val] : j.at("instances").items())
      mf.classes[std::stoi(key)] = val.get<std::string>();
  }
  std::set<int> seen;
  for (uint16_t v : mf.labels.data)
    if (v != 0) seen.insert(v);
  for (int id : seen) {
    if (!mf.classes.count(id)) {
      throw std::runtime_error("instance id " + std::to_string(id) +
                               " missing from class table: " + entry.mask_meta_path);
    }
  }
  return mf;
}

std::vector<InstanceMaskFrame> load_masks(const SequenceManifest& manifest,
                                          const std::string& mask_dir, double tolerance) {
  SequenceManifest copy = manifest;
  attach_masks(copy, mask_dir, tolerance);
  std::vector<InstanceMaskFrame> out;
  out.reserve(copy.entries.size());
  for (const SequenceEntry& e : copy.entries)
    out.push_back(load_mask_frame(e, manifest.intrinsics.width, manifest.intrinsics.height));
  return out;
}

void write_mesh(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mesh: " + path);
  const bool colored = mesh.colors.size() == mesh.vertices.size() && !mesh.vertices.empty();
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << mesh.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (colored) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "element face " << mesh.triangles.size() << "\n";
  out << "property list uchar int vertex_indices\nend_header\n";
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Eigen::Vector3d& v = mesh.vertices[i];
    out << format_value(v.x()) << ' ' << format_value(v.y()) << ' ' << format_value(v.z());
    if (colored) {
      out << ' ' << int(mesh.colors[i][0]) << ' ' << int(mesh.colors[i][1]) << ' '
          << int(mesh.colors[i][2]);
    }
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  if (!out) throw std::runtime_error("failed writing mesh: " + path);
}

void write_trajectory(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory: " + path);
  char buf[256];
  for (const auto& [ts, pose] : traj.poses) {
    Eigen::Quaterniond q(pose.rotation);
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    std::snprintf(buf, sizeof(buf), "%.6f %s %s %s %s %s %s %s\n", ts,
                  format_value(pose.translation.x()).c_str(),
                  format_value(pose.translation.y()).c_str(),
                  format_value(pose.translation.z()).c_str(), format_value(q.x()).c_str(),
                  format_value(q.y()).c_str(), format_value(q.z()).c_str(),
                  format_value(q.w()).c_str());
    out << buf;
  }
  if (!out) throw std::runtime_error("failed writing trajectory: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory: " + path);
  Trajectory traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) continue;
    RigidTransform pose;
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    pose.rotation = q.toRotationMatrix();
    pose.translation = {tx, ty, tz};
    traj.poses.emplace_back(ts, pose);
  }
  return traj;
}

}  // namespace splitfusion
