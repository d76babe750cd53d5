#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include "splitfusion/config.hpp"
#include "splitfusion/core_geometry.hpp"
#include "splitfusion/dataset_io.hpp"
#include "splitfusion/deformation_graph.hpp"
#include "splitfusion/nonrigid_icp.hpp"
#include "splitfusion/scene_split.hpp"
#include "splitfusion/tsdf_fusion.hpp"

namespace splitfusion {

enum class SurfaceStatus { Active, Lost, Retired };

struct Surface {
  int id = 0;
  std::string class_name;
  Rigidity rigidity = Rigidity::Rigid;
  bool is_background = false;
  SurfaceStatus status = SurfaceStatus::Active;
  int lost_streak = 0;
  int spawned_frame = 0;

  TsdfVolume volume;
  DeformationGraph graph;
  PixelMask last_mask;  // segment pixels of the most recent tracked frame

  // per-frame warp snapshots for reunite()
  std::vector<int> snapshot_frames;
  std::vector<std::vector<GraphNode>> snapshots;

  size_t clipped_points = 0;  // total live points outside the volume / warp range

  RigidTransform node_transform() const {
    return {graph.nodes[0].R, graph.nodes[0].t};  // rigid surfaces, k == 1
  }
  const std::vector<GraphNode>* snapshot_at(int frame) const;
};

struct SurfaceDiag {
  int id = 0;
  std::string class_name;
  bool rigid = true;
  std::string status;  // tracked | lost | retired | spawned | skipped
  int n_corr = 0;
  double e_data = 0.0;
  double e_prior = 0.0;
  size_t clipped = 0;
  std::vector<IterationDiag> iterations;
};

struct FrameDiag {
  int index = 0;
  double timestamp = 0.0;
  std::vector<SurfaceDiag> surfaces;
};

struct SceneState {
  std::vector<Surface> surfaces;
  Trajectory camera;  // world-from-camera, world = first background frame
  int frames_processed = 0;

  const Surface* background() const;
};

// Background tracking failure aborts the run but the state stays inspectable.
struct TrackingLostError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Greedy max-IoU matching of segments to non-retired surfaces of the same
// class against each surface's last tracked mask; -1 marks "new". The
// background segment always maps to the background surface.
std::vector<int> associate_segments(const std::vector<SurfaceSegment>& segments,
                                    const SceneState& state, double min_iou = 0.3);

class Pipeline {
 public:
  Pipeline(RunConfig config, ClassTable table);

  // Split, associate, track, fuse, grow. Throws TrackingLostError when the
  // background cannot be tracked.
  FrameDiag process_frame(const DepthFrame& frame, const InstanceMaskFrame& masks);

  const SceneState& state() const { return state_; }
  SceneState& mutable_state() { return state_; }
  const RunConfig& config() const { return config_; }

  // All surfaces with a snapshot at `frame_index`, warped into that frame's
  // camera coordinates and concatenated with per-surface colors.
  TriangleMesh reunite(int frame_index) const;

  // One surface's canonical mesh warped into the frame's camera coordinates;
  // empty when the surface has no snapshot at that frame.
  TriangleMesh reunite_surface(int surface_id, int frame_index) const;

  TriangleMesh canonical_mesh(int surface_id) const;

 private:
  int track_and_fuse(Surface& surface, const DepthFrame& frame, const LiveFrame& live,
                     const SurfaceSegment& segment, SurfaceDiag& diag);
  void spawn_surface(const SurfaceSegment& segment, const DepthFrame& frame, int frame_index,
                     FrameDiag& diag);

  RunConfig config_;
  ClassTable class_table_;
  SceneState state_;
  int next_surface_id_ = 0;
};

struct RunOptions {
  std::string dataset_dir;
  std::string mask_dir;   // empty = no masks
  std::string out_dir;
  int frame_begin = 0;
  int frame_end = -1;  // exclusive; -1 = all
  int export_every = 0;  // reunited mesh every N processed frames; final frame always
  bool rigid_only = false;
  bool dump_volumes = false;
  CameraIntrinsics fallback_intrinsics;
};

struct RunSummary {
  int frames_processed = 0;
  int surfaces_total = 0;
  int surfaces_retired = 0;
  std::string trajectory_path;
  std::string report_path;
};

// Full-sequence driver: loads the dataset, runs the pipeline, writes
// trajectory.txt, surface_<id>_canonical.ply, reunited_<frame>.ply and
// report.json into out_dir. Throws on dataset errors; on background loss the
// partial outputs are flushed before rethrowing.
RunSummary run_sequence(const RunConfig& config, const RunOptions& options,
                        const std::function<void(int, int)>& progress = {});

}  // namespace splitfusion
