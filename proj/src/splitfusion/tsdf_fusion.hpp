#pragma once

#include <optional>
#include <string>

#include "splitfusion/core_geometry.hpp"
#include "splitfusion/deformation_graph.hpp"

namespace splitfusion {

// Canonical voxel grid of (tsdf, weight) pairs. Voxel (i,j,k) sits at
// origin + voxel_size * (i,j,k); storage is x-fastest.
struct TsdfVolume {
  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  double voxel_size = 0.01;
  int nx = 0, ny = 0, nz = 0;
  double truncation = 0.04;  // tau, meters
  float max_weight = 100.0f;
  std::vector<float> tsdf;    // clamped to [-1, 1]
  std::vector<float> weight;  // [0, max_weight]

  size_t voxel_count() const { return static_cast<size_t>(nx) * ny * nz; }
  size_t index(int i, int j, int k) const {
    return static_cast<size_t>(k) * ny * nx + static_cast<size_t>(j) * nx + i;
  }
  Eigen::Vector3d voxel_position(int i, int j, int k) const {
    return origin + voxel_size * Eigen::Vector3d(i, j, k);
  }
  Eigen::Vector3d max_corner() const {
    return origin + voxel_size * Eigen::Vector3d(nx - 1, ny - 1, nz - 1);
  }

  // Trilinear tsdf; invalid (nullopt) if any of the 8 surrounding voxels is
  // unobserved or p leaves the grid.
  std::optional<double> interpolate(const Eigen::Vector3d& p) const;
  std::optional<Eigen::Vector3d> gradient(const Eigen::Vector3d& p) const;
};

TsdfVolume make_volume(const Eigen::Vector3d& bbox_lo, const Eigen::Vector3d& bbox_hi,
                       double voxel_size, double truncation, double padding,
                       float max_weight = 100.0f);

// Projective TSDF update: for every voxel the canonical center is mapped into
// the live camera frame, projected, and fused with sample weight 1 when the
// masked pixel holds valid depth and sdf > -truncation.
void integrate_rigid(TsdfVolume& vol, const DepthFrame& frame, const RigidTransform& pose,
                     const PixelMask* mask = nullptr);

// Same update with the canonical voxel center warped by the deformation graph;
// voxels without a binding entry are skipped.
void integrate_nonrigid(TsdfVolume& vol, const DepthFrame& frame, const DeformationGraph& graph,
                        const BlendBinding& voxel_binding, const PixelMask* mask = nullptr);

// Eq.-3 binding of voxel centers; voxels farther than max_node_distance from
// every node get an empty entry (skipped by integrate_nonrigid).
BlendBinding bind_voxels(const TsdfVolume& vol, const DeformationGraph& graph,
                         double max_node_distance);

struct RaycastResult {
  Image<Eigen::Vector3d> vertices;  // canonical coordinates
  Image<Eigen::Vector3d> normals;   // canonical coordinates, unit
  Image<float> depth;               // camera-frame z of the hit, 0 = invalid
  Image<uint8_t> valid;

  PointCloud to_cloud() const;
};

// Per-pixel ray march at truncation/2 steps, one secant refinement of the
// zero crossing, gradient normals. pose is camera-from-canonical.
RaycastResult raycast(const TsdfVolume& vol, const CameraIntrinsics& intrinsics,
                      const RigidTransform& pose);

// Marching cubes over observed voxels; consistent outward (positive-side)
// orientation.
TriangleMesh extract_mesh(const TsdfVolume& vol);

// Binary dump: 48-byte header (magic "TSDF", int32 dims, float64 origin,
// float32 voxel size, float32 truncation) then (tsdf, weight) float32 pairs,
// x-fastest.
void save_volume(const TsdfVolume& vol, const std::string& path);
TsdfVolume load_volume(const std::string& path);

}  // namespace splitfusion
