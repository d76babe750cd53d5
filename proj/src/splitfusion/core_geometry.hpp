#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace splitfusion {

// Row-major image container. at(row, col).
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  bool empty() const { return data.empty(); }
  bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
  T& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
};

struct CameraIntrinsics {
  double fx = 525.0;
  double fy = 525.0;
  double cx = 319.5;
  double cy = 239.5;
  int width = 640;
  int height = 480;
  double depth_scale = 5000.0;  // depth-image integer units per meter

  bool valid() const {
    return fx > 0 && fy > 0 && cx >= 0 && cx < width && cy >= 0 && cy < height && depth_scale > 0;
  }
};

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  bool is_rigid(double tol = 1e-9) const;
};

RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& a);

// Nearest rotation matrix in Frobenius norm (SVD projection).
Eigen::Matrix3d orthonormalize_rotation(const Eigen::Matrix3d& m);

// Rodrigues. exp of the cross-product matrix of w.
Eigen::Matrix3d axis_angle_to_rotation(const Eigen::Vector3d& w);

struct DepthFrame {
  double timestamp = 0.0;
  Image<double> depth;                       // meters, 0 = invalid
  Image<std::array<uint8_t, 3>> color;       // optional, empty when absent
  CameraIntrinsics intrinsics;

  bool valid_at(int r, int c) const {
    return depth.in_bounds(r, c) && depth.at(r, c) > 0.0 && std::isfinite(depth.at(r, c));
  }
};

struct PointCloud {
  std::vector<Eigen::Vector3d> vertices;            // camera frame, meters
  std::vector<Eigen::Vector3d> normals;             // unit; zero vector marks invalid
  std::vector<std::array<int, 2>> pixel_origin;     // (row, col)

  size_t size() const { return vertices.size(); }
  bool normal_valid(size_t i) const { return normals[i].squaredNorm() > 0.25; }
};

struct TriangleMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<uint8_t, 3>> colors;  // optional per-vertex, empty or size()==vertices

  bool empty() const { return vertices.empty(); }
};

// Dense boolean pixel set over an image grid.
struct PixelMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> on;

  PixelMask() = default;
  PixelMask(int w, int h, bool fill = false)
      : width(w), height(h), on(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

  bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
  bool test(int r, int c) const { return on[static_cast<size_t>(r) * width + c] != 0; }
  void set(int r, int c, bool v = true) { on[static_cast<size_t>(r) * width + c] = v ? 1 : 0; }
  size_t count() const;
};

size_t mask_intersection_count(const PixelMask& a, const PixelMask& b);
double mask_iou(const PixelMask& a, const PixelMask& b);

// Chebyshev erosion; pixels within `radius` of the image border erode too.
PixelMask erode_mask(const PixelMask& mask, int radius);

// vertex = d * ((u - cx)/fx, (v - cy)/fy, 1)
inline Eigen::Vector3d backproject_pixel(const CameraIntrinsics& K, double u, double v, double d) {
  return {d * (u - K.cx) / K.fx, d * (v - K.cy) / K.fy, d};
}

// Pinhole projection, u = column, v = row. False for points at or behind the camera.
inline bool project_point(const CameraIntrinsics& K, const Eigen::Vector3d& p, double& u, double& v) {
  if (p.z() <= 0.0) return false;
  u = K.fx * p.x() / p.z() + K.cx;
  v = K.fy * p.y() / p.z() + K.cy;
  return true;
}

// Per-pixel backprojected vertices; invalid depth yields a zero vertex (z == 0 marks invalid).
Image<Eigen::Vector3d> compute_vertex_map(const DepthFrame& frame);

// Central-difference normals on the vertex map, oriented toward the camera (n.v < 0).
// Zero vector marks invalid (edge pixels, invalid neighbors).
Image<Eigen::Vector3d> compute_normal_map(const DepthFrame& frame);
Image<Eigen::Vector3d> compute_normal_map(const Image<Eigen::Vector3d>& vertex_map);

PointCloud backproject(const DepthFrame& frame, const PixelMask* mask = nullptr);

}  // namespace splitfusion
