#include "splitfusion/tsdf_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "splitfusion/kdtree.hpp"
#include "splitfusion/marching_cubes.hpp"

namespace splitfusion {

std::optional<double> TsdfVolume::interpolate(const Eigen::Vector3d& p) const {
  const Eigen::Vector3d g = (p - origin) / voxel_size;
  const int i = static_cast<int>(std::floor(g.x()));
  const int j = static_cast<int>(std::floor(g.y()));
  const int k = static_cast<int>(std::floor(g.z()));
  if (i < 0 || j < 0 || k < 0 || i + 1 >= nx || j + 1 >= ny || k + 1 >= nz) return std::nullopt;
  const double fx = g.x() - i, fy = g.y() - j, fz = g.z() - k;
  double out = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
    const size_t idx = index(i + di, j + dj, k + dk);
    if (weight[idx] <= 0.0f) return std::nullopt;
    const double w = (di ? fx : 1.0 - fx) * (dj ? fy : 1.0 - fy) * (dk ? fz : 1.0 - fz);
    out += w * tsdf[idx];
  }
  return out;
}

std::optional<Eigen::Vector3d> TsdfVolume::gradient(const Eigen::Vector3d& p) const {
  const double h = voxel_size;
  Eigen::Vector3d g;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d lo = p, hi = p;
    lo[a] -= h;
    hi[a] += h;
    const auto vlo = interpolate(lo), vhi = interpolate(hi);
    if (!vlo || !vhi) return std::nullopt;
    g[a] = (*vhi - *vlo) / (2.0 * h);
  }
  return g;
}

TsdfVolume make_volume(const Eigen::Vector3d& bbox_lo, const Eigen::Vector3d& bbox_hi,
                       double voxel_size, double truncation, double padding, float max_weight) {
  TsdfVolume v;
  v.voxel_size = voxel_size;
  v.truncation = truncation;
  v.max_weight = max_weight;
  v.origin = bbox_lo - Eigen::Vector3d::Constant(padding);
  const Eigen::Vector3d extent = bbox_hi + Eigen::Vector3d::Constant(padding) - v.origin;
  v.nx = std::max(2, static_cast<int>(std::ceil(extent.x() / voxel_size)) + 1);
  v.ny = std::max(2, static_cast<int>(std::ceil(extent.y() / voxel_size)) + 1);
  v.nz = std::max(2, static_cast<int>(std::ceil(extent.z() / voxel_size)) + 1);
  v.tsdf.assign(v.voxel_count(), 1.0f);
  v.weight.assign(v.voxel_count(), 0.0f);
  return v;
}

namespace {

// Bilinear depth at (u, v), falling back to the nearest pixel across
// discontinuities or invalid neighbors. Nearest-pixel lookup alone biases the
// fused surface by half a pixel's worth of depth slope.
double sample_depth(const Image<double>& depth, double u, double v, double guard) {
  const int c = static_cast<int>(std::lround(u));
  const int r = static_cast<int>(std::lround(v));
  if (!depth.in_bounds(r, c)) return 0.0;
  const double nearest = depth.at(r, c);
  const int c0 = static_cast<int>(std::floor(u));
  const int r0 = static_cast<int>(std::floor(v));
  if (c0 < 0 || r0 < 0 || c0 + 1 >= depth.width || r0 + 1 >= depth.height) return nearest;
  const double d00 = depth.at(r0, c0), d01 = depth.at(r0, c0 + 1);
  const double d10 = depth.at(r0 + 1, c0), d11 = depth.at(r0 + 1, c0 + 1);
  if (d00 <= 0 || d01 <= 0 || d10 <= 0 || d11 <= 0) return nearest;
  const double lo = std::min(std::min(d00, d01), std::min(d10, d11));
  const double hi = std::max(std::max(d00, d01), std::max(d10, d11));
  if (hi - lo > guard) return nearest;
  const double fu = u - c0, fv = v - r0;
  return (1 - fv) * ((1 - fu) * d00 + fu * d01) + fv * ((1 - fu) * d10 + fu * d11);
}

// Shared projective update; WarpFn maps a canonical voxel center to the live
// camera frame (or nullopt to skip the voxel).
template <typename WarpFn>
void integrate_impl(TsdfVolume& vol, const DepthFrame& frame, const PixelMask* mask,
                    WarpFn&& warp) {
  const CameraIntrinsics& K = frame.intrinsics;
  const double tau = vol.truncation;

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < vol.nz; ++k) {
    for (int j = 0; j < vol.ny; ++j) {
      for (int i = 0; i < vol.nx; ++i) {
        const std::optional<Eigen::Vector3d> pc = warp(vol.voxel_position(i, j, k), i, j, k);
        if (!pc || pc->z() <= 0.0) continue;
        double u, v;
        if (!project_point(K, *pc, u, v)) continue;
        const int c = static_cast<int>(std::lround(u));
        const int r = static_cast<int>(std::lround(v));
        if (r < 0 || r >= frame.depth.height || c < 0 || c >= frame.depth.width) continue;
        if (mask && !mask->test(r, c)) continue;
        if (frame.depth.at(r, c) <= 0.0 || !std::isfinite(frame.depth.at(r, c))) continue;
        const double d = sample_depth(frame.depth, u, v, 0.5 * tau);
        const double sdf = d - pc->z();
        if (sdf <= -tau) continue;
        const float sample = static_cast<float>(std::clamp(sdf / tau, -1.0, 1.0));
        const size_t idx = vol.index(i, j, k);
        const float w = vol.weight[idx];
        vol.tsdf[idx] = (w * vol.tsdf[idx] + sample) / (w + 1.0f);
        vol.weight[idx] = std::min(w + 1.0f, vol.max_weight);
      }
    }
  }
}

}  // namespace

void integrate_rigid(TsdfVolume& vol, const DepthFrame& frame, const RigidTransform& pose,
                     const PixelMask* mask) {
  integrate_impl(vol, frame, mask,
                 [&](const Eigen::Vector3d& x, int, int, int) -> std::optional<Eigen::Vector3d> {
                   return pose.rotation * x + pose.translation;
                 });
}

void integrate_nonrigid(TsdfVolume& vol, const DepthFrame& frame, const DeformationGraph& graph,
                        const BlendBinding& voxel_binding, const PixelMask* mask) {
  if (voxel_binding.size() != vol.voxel_count())
    throw std::runtime_error("voxel binding does not match volume");
  integrate_impl(vol, frame, mask,
                 [&](const Eigen::Vector3d& x, int i, int j, int k)
                     -> std::optional<Eigen::Vector3d> {
                   const NodeWeights& w = voxel_binding.weights[vol.index(i, j, k)];
                   if (w.empty()) return std::nullopt;
                   return warp_point(x, w, graph);
                 });
}

BlendBinding bind_voxels(const TsdfVolume& vol, const DeformationGraph& graph,
                         double max_node_distance) {
  BlendBinding b;
  b.weights.resize(vol.voxel_count());
  b.d_max.resize(vol.voxel_count(), 0.0);
  if (graph.nodes.empty()) return b;

  std::vector<Eigen::Vector3d> positions;
  positions.reserve(graph.nodes.size());
  for (const GraphNode& n : graph.nodes) positions.push_back(n.g);
  KdTree3 tree(positions);
  const double max_d2 = max_node_distance * max_node_distance;

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < vol.nz; ++k) {
    for (int j = 0; j < vol.ny; ++j) {
      for (int i = 0; i < vol.nx; ++i) {
        const Eigen::Vector3d x = vol.voxel_position(i, j, k);
        const int nearest = tree.nearest(x);
        if (nearest < 0 || (positions[nearest] - x).squaredNorm() > max_d2) continue;
        double dmax = 0.0;
        NodeWeights w = bind_point(x, graph, &dmax);
        const size_t idx = vol.index(i, j, k);
        b.weights[idx] = std::move(w);
        b.d_max[idx] = dmax;
      }
    }
  }
  return b;
}

PointCloud RaycastResult::to_cloud() const {
  PointCloud cloud;
  for (int r = 0; r < vertices.height; ++r) {
    for (int c = 0; c < vertices.width; ++c) {
      if (!valid.at(r, c)) continue;
      cloud.vertices.push_back(vertices.at(r, c));
      cloud.normals.push_back(normals.at(r, c));
      cloud.pixel_origin.push_back({r, c});
    }
  }
  return cloud;
}

RaycastResult raycast(const TsdfVolume& vol, const CameraIntrinsics& intrinsics,
                      const RigidTransform& pose) {
  RaycastResult res;
  res.vertices = Image<Eigen::Vector3d>(intrinsics.width, intrinsics.height,
                                        Eigen::Vector3d::Zero());
  res.normals = Image<Eigen::Vector3d>(intrinsics.width, intrinsics.height,
                                       Eigen::Vector3d::Zero());
  res.depth = Image<float>(intrinsics.width, intrinsics.height, 0.0f);
  res.valid = Image<uint8_t>(intrinsics.width, intrinsics.height, 0);

  const RigidTransform inv = invert(pose);  // canonical-from-camera
  const Eigen::Vector3d o = inv.translation;
  const Eigen::Vector3d lo = vol.origin;
  const Eigen::Vector3d hi = vol.max_corner();

#pragma omp parallel for schedule(dynamic, 4)
  for (int r = 0; r < intrinsics.height; ++r) {
    for (int c = 0; c < intrinsics.width; ++c) {
      const Eigen::Vector3d dir_cam((c - intrinsics.cx) / intrinsics.fx,
                                    (r - intrinsics.cy) / intrinsics.fy, 1.0);
      const Eigen::Vector3d d = inv.rotation * dir_cam;  // t is camera z-depth

      // clip to the interpolatable box
      double t0 = 1e-3, t1 = std::numeric_limits<double>::max();
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        if (std::abs(d[a]) < 1e-15) {
          if (o[a] < lo[a] || o[a] > hi[a]) miss = true;
          continue;
        }
        double ta = (lo[a] - o[a]) / d[a];
        double tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) miss = true;
      }
      if (miss) continue;

      const double step = 0.5 * vol.truncation / d.norm();
      double t_prev = 0.0, f_prev = 0.0;
      bool have_prev = false;
      bool hit = false;
      double t_hit = 0.0;
      for (double t = t0; t <= t1; t += step) {
        const auto f = vol.interpolate(o + t * d);
        if (!f) {
          have_prev = false;
          continue;
        }
        if (have_prev && f_prev > 0.0 && *f <= 0.0) {
          // one secant refinement of the crossing
          const double tz = t_prev + (t - t_prev) * f_prev / (f_prev - *f);
          t_hit = tz;
          hit = true;
          break;
        }
        t_prev = t;
        f_prev = *f;
        have_prev = true;
      }
      if (!hit) continue;

      const Eigen::Vector3d v = o + t_hit * d;
      const auto g = vol.gradient(v);
      if (!g || g->norm() < 1e-12) continue;
      res.vertices.at(r, c) = v;
      res.normals.at(r, c) = g->normalized();
      res.depth.at(r, c) = static_cast<float>(t_hit);
      res.valid.at(r, c) = 1;
    }
  }
  return res;
}

TriangleMesh extract_mesh(const TsdfVolume& vol) {
  TriangleMesh mesh;
  if (vol.voxel_count() == 0) return mesh;
  const McTables& tables = mc_tables();

  // global vertex keys: edges carry axis 0..2, lattice corners use tag 3 so a
  // crossing exactly on a corner is welded across all edges that touch it
  std::unordered_map<uint64_t, int> edge_vertex;
  auto key_of = [&](int i, int j, int k, int tag) {
    return (static_cast<uint64_t>(vol.index(i, j, k)) << 2) | static_cast<uint64_t>(tag);
  };
  auto intern = [&](uint64_t key, const Eigen::Vector3d& p) {
    const auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const int idx = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p);
    edge_vertex.emplace(key, idx);
    return idx;
  };

  // voxels holding exactly 0 count as just inside; the nudge keeps crossings
  // off lattice corners (a zero corner would pinch the surface)
  auto value_at = [&](size_t idx) -> double {
    const double v = vol.tsdf[idx];
    return v == 0.0 ? -1e-6 : v;
  };

  auto vertex_on_edge = [&](int i, int j, int k, int axis) -> int {
    const int i2 = i + (axis == 0), j2 = j + (axis == 1), k2 = k + (axis == 2);
    const double va = value_at(vol.index(i, j, k));
    const double vb = value_at(vol.index(i2, j2, k2));
    double tt = 0.5;
    if (std::abs(vb - va) > 1e-12) tt = std::clamp(va / (va - vb), 0.0, 1.0);
    if (tt <= 0.0) return intern(key_of(i, j, k, 3), vol.voxel_position(i, j, k));
    if (tt >= 1.0) return intern(key_of(i2, j2, k2, 3), vol.voxel_position(i2, j2, k2));
    const Eigen::Vector3d a = vol.voxel_position(i, j, k);
    const Eigen::Vector3d b = vol.voxel_position(i2, j2, k2);
    return intern(key_of(i, j, k, axis), a + tt * (b - a));
  };

  for (int k = 0; k + 1 < vol.nz; ++k) {
    for (int j = 0; j + 1 < vol.ny; ++j) {
      for (int i = 0; i + 1 < vol.nx; ++i) {
        int config = 0;
        bool observed = true;
        for (int c = 0; c < 8; ++c) {
          const size_t idx = vol.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          if (vol.weight[idx] <= 0.0f) {
            observed = false;
            break;
          }
          if (value_at(idx) < 0.0) config |= 1 << c;
        }
        if (!observed || tables.cases[config].empty()) continue;

        for (const auto& tri : tables.cases[config]) {
          int vi[3];
          for (int e = 0; e < 3; ++e) {
            const int axis = tri[e] / 4;
            const int base = tables.edge_corners[tri[e]][0];  // lower corner of the edge
            vi[e] = vertex_on_edge(i + (base & 1), j + ((base >> 1) & 1),
                                   k + ((base >> 2) & 1), axis);
          }
          if (vi[0] == vi[1] || vi[1] == vi[2] || vi[0] == vi[2]) continue;
          const Eigen::Vector3d& a = mesh.vertices[vi[0]];
          const Eigen::Vector3d& b = mesh.vertices[vi[1]];
          const Eigen::Vector3d& c2 = mesh.vertices[vi[2]];
          if ((b - a).cross(c2 - a).squaredNorm() == 0.0) continue;  // exactly degenerate
          mesh.triangles.push_back({vi[0], vi[1], vi[2]});
        }
      }
    }
  }
  return mesh;
}

void save_volume(const TsdfVolume& vol, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write volume: " + path);
  char header[48] = {};
  std::memcpy(header, "TSDF", 4);
  const int32_t dims[3] = {vol.nx, vol.ny, vol.nz};
  std::memcpy(header + 4, dims, 12);
  const double org[3] = {vol.origin.x(), vol.origin.y(), vol.origin.z()};
  std::memcpy(header + 16, org, 24);
  const float s = static_cast<float>(vol.voxel_size);
  const float tau = static_cast<float>(vol.truncation);
  std::memcpy(header + 40, &s, 4);
  std::memcpy(header + 44, &tau, 4);
  out.write(header, sizeof(header));
  std::vector<float> interleaved(vol.voxel_count() * 2);
  for (size_t i = 0; i < vol.voxel_count(); ++i) {
    interleaved[2 * i] = vol.tsdf[i];
    interleaved[2 * i + 1] = vol.weight[i];
  }
  out.write(reinterpret_cast<const char*>(interleaved.data()),
            static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing volume: " + path);
}

TsdfVolume load_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open volume: " + path);
  char header[48];
  in.read(header, sizeof(header));
  if (!in || std::memcmp(header, "TSDF", 4) != 0)
    throw std::runtime_error("not a TSDF volume dump: " + path);
  TsdfVolume vol;
  int32_t dims[3];
  std::memcpy(dims, header + 4, 12);
  vol.nx = dims[0];
  vol.ny = dims[1];
  vol.nz = dims[2];
  double org[3];
  std::memcpy(org, header + 16, 24);
  vol.origin = {org[0], org[1], org[2]};
  float s, tau;
  std::memcpy(&s, header + 40, 4);
  std::memcpy(&tau, header + 44, 4);
  vol.voxel_size = s;
  vol.truncation = tau;
  std::vector<float> interleaved(vol.voxel_count() * 2);
  in.read(reinterpret_cast<char*>(interleaved.data()),
          static_cast<std::streamsize>(interleaved.size() * sizeof(float)));
  if (!in) throw std::runtime_error("truncated volume dump: " + path);
  vol.tsdf.resize(vol.voxel_count());
  vol.weight.resize(vol.voxel_count());
  for (size_t i = 0; i < vol.voxel_count(); ++i) {
    vol.tsdf[i] = interleaved[2 * i];
    vol.weight[i] = interleaved[2 * i + 1];
  }
  return vol;
}

}  // namespace splitfusion
