#pragma once

#include <optional>
#include <string>
#include <vector>

#include "splitfusion/core_geometry.hpp"
#include "splitfusion/dataset_io.hpp"

namespace splitfusion {

enum class PrimitiveType { Plane, Box, Sphere, Sheet, PulsingSphere };

// All primitives live in a local frame (pose maps local -> world at frame 0).
// Plane and sheet are the rectangle |x|<=hx, |y|<=hy on the local z=0 plane;
// the sheet is the height field
//   z = base_amplitude sin(2*pi*fs*x) cos(2*pi*fs*y)
//     + amplitude sin(2*pi*fs*x) sin(2*pi*ft*frame),
// a static eggcrate (tangentially observable geometry) plus the temporal
// bending mode.
struct ScenePrimitive {
  PrimitiveType type = PrimitiveType::Plane;
  std::string klass;        // semantic class for the mask; unused when background
  bool background = false;  // background primitives share instance id 0
  RigidTransform pose;
  Eigen::Vector2d half_extent2{1.0, 1.0};       // plane, sheet
  Eigen::Vector3d half_extent3{0.1, 0.1, 0.1};  // box
  double radius = 0.3;                          // spheres
  double amplitude = 0.0;                       // sheet (m), pulsing sphere (fraction)
  double base_amplitude = 0.0;                  // sheet static shape (m)
  double spatial_freq = 1.0;                    // 1/m
  double temporal_freq = 0.0;                   // 1/frame
  Eigen::Vector3d linear_velocity = Eigen::Vector3d::Zero();   // m/frame, world
  Eigen::Vector3d angular_velocity = Eigen::Vector3d::Zero();  // axis*rad/frame
};

struct CameraPath {
  enum class Type { Fixed, XyzShake, Orbit, Line } type = Type::Fixed;
  RigidTransform base;                   // fixed / line / shake orientation + start
  Eigen::Vector3d amplitude{0.0, 0.0, 0.0};  // xyz_shake, meters
  Eigen::Vector3d periods{1.0, 2.0, 3.0};    // xyz_shake, cycles over the sequence
  Eigen::Vector3d target{0.0, 0.0, 0.0};     // orbit look-at
  double orbit_radius = 1.0;
  double orbit_revolutions = 1.0;
  Eigen::Vector3d line_end{0.0, 0.0, 0.0};

  RigidTransform pose(int frame, int total_frames) const;  // world-from-camera
};

struct SceneScript {
  int frames = 30;
  double fps = 30.0;
  CameraIntrinsics intrinsics;
  double noise_sigma = 0.0;  // meters, additive Gaussian on depth
  uint64_t seed = 0;
  double near_clip = 0.5;  // depth closer than this is unmeasured
  CameraPath camera;
  std::vector<ScenePrimitive> primitives;

  static SceneScript from_json_file(const std::string& path);
  static SceneScript from_json_text(const std::string& text);
};

struct RenderedFrame {
  DepthFrame frame;
  InstanceMaskFrame masks;
  RigidTransform camera_pose;  // ground truth, world-from-camera
};

RigidTransform primitive_pose(const ScenePrimitive& p, int frame);

// Local-frame canonical point of a deformable primitive mapped to its frame-f
// local position (identity for rigid primitives).
Eigen::Vector3d deform_local_point(const ScenePrimitive& p, const Eigen::Vector3d& local,
                                   int frame);

// Analytic depth of the nearest surface along the pixel ray, or nullopt.
std::optional<double> trace_pixel(const SceneScript& script, int frame, double u, double v,
                                  int* hit_primitive = nullptr);

RenderedFrame render(const SceneScript& script, int frame_index);

// Upper bound on the distance from a world point to the scene surface at the
// given frame (vertical residual for height fields, exact for box/sphere).
double scene_surface_distance(const SceneScript& script, const Eigen::Vector3d& world_point,
                              int frame);

// Writes a TUM-layout dataset: depth/, rgb/, masks/, depth.txt, rgb.txt,
// groundtruth.txt, intrinsics.json.
void export_dataset(const SceneScript& script, const std::string& directory);

// Ground-truth warp samples of a deformable primitive: pairs of (canonical
// world position at frame 0, world position at `frame`), on a grid_n^2 grid.
std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> warp_samples(
    const SceneScript& script, size_t primitive_index, int frame, int grid_n = 10);

}  // namespace splitfusion
