#include "splitfusion/core_geometry.hpp"

#include <cmath>

namespace splitfusion {

bool RigidTransform::is_rigid(double tol) const {
  const Eigen::Matrix3d err = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (err.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform invert(const RigidTransform& a) {
  RigidTransform out;
  out.rotation = a.rotation.transpose();
  out.translation = -(a.rotation.transpose() * a.translation);
  return out;
}

Eigen::Matrix3d orthonormalize_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

Eigen::Matrix3d axis_angle_to_rotation(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    Eigen::Matrix3d k;
    k << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Eigen::Matrix3d::Identity() + k;  // first order is exact to machine eps here
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

size_t PixelMask::count() const {
  size_t n = 0;
  for (uint8_t v : on) n += v != 0;
  return n;
}

size_t mask_intersection_count(const PixelMask& a, const PixelMask& b) {
  size_t n = 0;
  const size_t m = std::min(a.on.size(), b.on.size());
  for (size_t i = 0; i < m; ++i) n += (a.on[i] && b.on[i]);
  return n;
}

double mask_iou(const PixelMask& a, const PixelMask& b) {
  const size_t inter = mask_intersection_count(a, b);
  const size_t uni = a.count() + b.count() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

PixelMask erode_mask(const PixelMask& mask, int radius) {
  if (radius <= 0) return mask;
  PixelMask out(mask.width, mask.height);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.test(r, c)) continue;
      bool keep = r >= radius && c >= radius && r + radius < mask.height &&
                  c + radius < mask.width;
      for (int dr = -radius; keep && dr <= radius; ++dr)
        for (int dc = -radius; keep && dc <= radius; ++dc)
          if (!mask.test(r + dr, c + dc)) keep = false;
      if (keep) out.set(r, c);
    }
  }
  return out;
}

Image<Eigen::Vector3d> compute_vertex_map(const DepthFrame& frame) {
  const CameraIntrinsics& K = frame.intrinsics;
  Image<Eigen::Vector3d> vmap(frame.depth.width, frame.depth.height, Eigen::Vector3d::Zero());
  for (int r = 0; r < frame.depth.height; ++r) {
    for (int c = 0; c < frame.depth.width; ++c) {
      const double d = frame.depth.at(r, c);
      if (d > 0.0f && std::isfinite(d)) {
        vmap.at(r, c) = backproject_pixel(K, c, r, d);
      }
    }
  }
  return vmap;
}

Image<Eigen::Vector3d> compute_normal_map(const Image<Eigen::Vector3d>& vmap) {
  Image<Eigen::Vector3d> nmap(vmap.width, vmap.height, Eigen::Vector3d::Zero());
  auto valid = [&](int r, int c) { return vmap.at(r, c).z() > 0.0; };
  for (int r = 1; r < vmap.height - 1; ++r) {
    for (int c = 1; c < vmap.width - 1; ++c) {
      if (!valid(r, c) || !valid(r, c - 1) || !valid(r, c + 1) || !valid(r - 1, c) ||
          !valid(r + 1, c)) {
        continue;
      }
      const Eigen::Vector3d du = vmap.at(r, c + 1) - vmap.at(r, c - 1);
      const Eigen::Vector3d dv = vmap.at(r + 1, c) - vmap.at(r - 1, c);
      Eigen::Vector3d n = du.cross(dv);
      const double len = n.norm();
      if (len < 1e-12) continue;
      n /= len;
      if (n.dot(vmap.at(r, c)) > 0.0) n = -n;
      nmap.at(r, c) = n;
    }
  }
  return nmap;
}

Image<Eigen::Vector3d> compute_normal_map(const DepthFrame& frame) {
  return compute_normal_map(compute_vertex_map(frame));
}

PointCloud backproject(const DepthFrame& frame, const PixelMask* mask) {
  PointCloud cloud;
  const Image<Eigen::Vector3d> vmap = compute_vertex_map(frame);
  const Image<Eigen::Vector3d> nmap = compute_normal_map(vmap);
  for (int r = 0; r < frame.depth.height; ++r) {
    for (int c = 0; c < frame.depth.width; ++c) {
      if (vmap.at(r, c).z() <= 0.0) continue;
      if (mask && !mask->test(r, c)) continue;
      cloud.vertices.push_back(vmap.at(r, c));
      cloud.normals.push_back(nmap.at(r, c));
      cloud.pixel_origin.push_back({r, c});
    }
  }
  return cloud;
}

}  // namespace splitfusion
