#pragma once

#include <map>
#include <string>
#include <vector>

#include "splitfusion/core_geometry.hpp"

namespace splitfusion {

struct SequenceEntry {
  double timestamp = 0.0;      // depth timestamp
  std::string depth_path;
  std::string color_path;
  std::string mask_path;       // empty when no mask exists for this frame
  std::string mask_meta_path;  // sidecar JSON next to mask_path
};

struct SequenceManifest {
  std::vector<SequenceEntry> entries;
  CameraIntrinsics intrinsics;
};

// TUM layout: depth.txt / rgb.txt index files, 16-bit depth PNGs. Depth and color
// are paired greedily by smallest timestamp difference within `tolerance` seconds.
// If <root>/intrinsics.json exists it overrides `fallback` (synthetic exports write one).
SequenceManifest load_tum_sequence(const std::string& root, double tolerance = 0.02,
                                   const CameraIntrinsics& fallback = {});

// Attach <mask_dir>/<timestamp>.png (+ .json sidecar) to entries by nearest timestamp.
void attach_masks(SequenceManifest& manifest, const std::string& mask_dir,
                  double tolerance = 0.02);

DepthFrame load_frame(const SequenceManifest& manifest, size_t index);

struct InstanceMaskFrame {
  Image<uint16_t> labels;                 // 0 = background
  std::map<int, std::string> classes;     // instance id -> semantic class

  bool all_background() const { return classes.empty(); }
};

// One InstanceMaskFrame per manifest entry; frames without a mask file get an
// all-background mask of the frame dimensions.
std::vector<InstanceMaskFrame> load_masks(const SequenceManifest& manifest,
                                          const std::string& mask_dir, double tolerance = 0.02);
InstanceMaskFrame load_mask_frame(const SequenceEntry& entry, int width, int height);

struct Trajectory {
  std::vector<std::pair<double, RigidTransform>> poses;  // world-from-camera

  size_t size() const { return poses.size(); }
};

// ASCII PLY, optional per-vertex uchar colors.
void write_mesh(const TriangleMesh& mesh, const std::string& path);

// TUM format: "timestamp tx ty tz qx qy qz qw", quaternion sign fixed to w >= 0.
void write_trajectory(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory(const std::string& path);

}  // namespace splitfusion
