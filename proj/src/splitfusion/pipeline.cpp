#include "splitfusion/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "splitfusion/kdtree.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace splitfusion {

namespace {

std::array<uint8_t, 3> surface_color(int id) {
  static const std::array<std::array<uint8_t, 3>, 8> palette = {{{180, 180, 180},
                                                                 {230, 90, 70},
                                                                 {80, 160, 230},
                                                                 {95, 200, 95},
                                                                 {235, 200, 70},
                                                                 {185, 95, 225},
                                                                 {85, 220, 205},
                                                                 {240, 145, 70}}};
  return palette[static_cast<size_t>(id) % palette.size()];
}

json diag_to_json(const SurfaceDiag& d) {
  json iters = json::array();
  for (const IterationDiag& it : d.iterations) {
    iters.push_back({{"outer", it.outer},
                     {"inner", it.inner},
                     {"e_data", it.e_data},
                     {"e_prior", it.e_prior},
                     {"n_corr", it.n_corr},
                     {"step_norm", it.step_norm},
                     {"accepted", it.accepted}});
  }
  return {{"id", d.id},         {"class", d.class_name}, {"rigid", d.rigid},
          {"status", d.status}, {"n_corr", d.n_corr},    {"e_data", d.e_data},
          {"e_prior", d.e_prior}, {"clipped", d.clipped}, {"iterations", iters}};
}

}  // namespace

const std::vector<GraphNode>* Surface::snapshot_at(int frame) const {
  for (size_t i = snapshot_frames.size(); i-- > 0;) {
    if (snapshot_frames[i] == frame) return &snapshots[i];
  }
  return nullptr;
}

const Surface* SceneState::background() const {
  for (const Surface& s : surfaces)
    if (s.is_background) return &s;
  return nullptr;
}

// Greedy max-IoU matching of segments to non-retired surfaces of the same
// class; the background segment always maps to the background surface.
std::vector<int> associate_segments(const std::vector<SurfaceSegment>& segments,
                                    const SceneState& state, double min_iou) {
  std::vector<int> match(segments.size(), -1);
  struct Cand {
    double iou;
    size_t seg;
    int surf;
  };
  std::vector<Cand> cands;
  for (size_t si = 0; si < segments.size(); ++si) {
    const SurfaceSegment& seg = segments[si];
    for (const Surface& surf : state.surfaces) {
      if (surf.status == SurfaceStatus::Retired) continue;
      if (seg.instance_id == 0) {
        if (surf.is_background) match[si] = surf.id;
        continue;
      }
      if (surf.is_background || surf.class_name != seg.class_name) continue;
      const double iou = mask_iou(seg.pixels, surf.last_mask);
      if (iou >= min_iou) cands.push_back({iou, si, surf.id});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.surf != b.surf) return a.surf < b.surf;
    return a.seg < b.seg;
  });
  std::set<int> used_surf;
  for (const Cand& c : cands) {
    if (match[c.seg] >= 0 || used_surf.count(c.surf)) continue;
    match[c.seg] = c.surf;
    used_surf.insert(c.surf);
  }
  return match;
}

Pipeline::Pipeline(RunConfig config, ClassTable table)
    : config_(std::move(config)), class_table_(std::move(table)) {
  config_.gates.lambda = config_.lambda;
}

void Pipeline::spawn_surface(const SurfaceSegment& segment, const DepthFrame& frame,
                             int frame_index, FrameDiag& fdiag) {
  SurfaceDiag diag;
  diag.class_name = segment.class_name;
  diag.rigid = segment.rigidity == Rigidity::Rigid;
  if (static_cast<int>(segment.cloud.size()) < config_.min_segment_points) {
    diag.id = -1;
    diag.status = "rejected";
    fdiag.surfaces.push_back(std::move(diag));
    return;
  }

  Surface s;
  s.id = next_surface_id_++;
  s.class_name = segment.class_name;
  s.rigidity = segment.rigidity;
  s.is_background = segment.instance_id == 0;
  s.spawned_frame = frame_index;

  const double vsize = s.is_background ? config_.voxel_size_background : config_.voxel_size;
  const double tau = config_.truncation_factor * vsize;
  Eigen::Vector3d lo = segment.cloud.vertices.front(), hi = lo;
  for (const Eigen::Vector3d& p : segment.cloud.vertices) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  s.volume = make_volume(lo, hi, vsize, tau, 10.0 * tau, config_.max_weight);

  if (s.rigidity == Rigidity::Rigid) {
    s.graph = rigid_graph(RigidTransform::identity());
  } else {
    s.graph = build_graph(segment.cloud.vertices, config_.r_node, config_.node_edges, config_.K);
  }

  const PixelMask fuse_mask = erode_mask(segment.pixels, config_.mask_erosion);
  integrate_rigid(s.volume, frame, RigidTransform::identity(), &fuse_mask);
  s.last_mask = segment.pixels;
  s.snapshot_frames.push_back(frame_index);
  s.snapshots.push_back(s.graph.nodes);

  diag.id = s.id;
  diag.status = "spawned";
  fdiag.surfaces.push_back(std::move(diag));
  state_.surfaces.push_back(std::move(s));
}

int Pipeline::track_and_fuse(Surface& surface, const DepthFrame& frame, const LiveFrame& live,
                             const SurfaceSegment& segment, SurfaceDiag& diag) {
  const bool rigid = surface.graph.size() == 1;
  const RigidTransform raycast_pose =
      rigid ? surface.node_transform() : RigidTransform::identity();
  const PointCloud model = raycast(surface.volume, frame.intrinsics, raycast_pose).to_cloud();

  TrackStatus status = TrackStatus::TrackingLost;
  if (static_cast<int>(model.size()) >= config_.icp.min_correspondences) {
    const SolveResult res =
        solve_warp(model, surface.graph, live, config_.gates, config_.icp, &segment.pixels);
    status = res.status;
    diag.iterations = res.iterations;
    diag.n_corr = res.final_corr_count;
    diag.e_data = res.final_e_data;
    diag.e_prior = res.final_e_prior;
  }

  if (status != TrackStatus::Ok) {
    surface.lost_streak += 1;
    surface.status = surface.lost_streak >= config_.lost_frames_to_retire
                         ? SurfaceStatus::Retired
                         : SurfaceStatus::Lost;
    diag.status = surface.status == SurfaceStatus::Retired ? "retired" : "lost";
    return 1;
  }

  surface.lost_streak = 0;
  surface.status = SurfaceStatus::Active;

  // fuse the segment into the canonical volume; the eroded mask keeps weakly
  // constrained boundary pixels from anchoring extrapolated warp geometry
  const PixelMask fuse_mask = erode_mask(segment.pixels, config_.mask_erosion);
  if (rigid) {
    integrate_rigid(surface.volume, frame, surface.node_transform(), &fuse_mask);
  } else {
    const BlendBinding vox_binding =
        bind_voxels(surface.volume, surface.graph, 2.0 * config_.r_node);
    integrate_nonrigid(surface.volume, frame, surface.graph, vox_binding, &fuse_mask);

    if (config_.grow_graphs) {
      // grow the graph where newly fused canonical geometry is uncovered
      const PointCloud canon =
          raycast(surface.volume, frame.intrinsics, RigidTransform::identity()).to_cloud();
      grow_graph(surface.graph, canon.vertices, config_.node_edges);
    }
  }

  // clipping diagnostics: live points the volume / warp cannot absorb
  size_t clipped = 0;
  if (rigid) {
    const RigidTransform inv = invert(surface.node_transform());
    const Eigen::Vector3d lo = surface.volume.origin;
    const Eigen::Vector3d hi = surface.volume.max_corner();
    for (const Eigen::Vector3d& p : segment.cloud.vertices) {
      const Eigen::Vector3d q = inv.apply(p);
      if ((q.array() < lo.array()).any() || (q.array() > hi.array()).any()) ++clipped;
    }
  } else {
    std::vector<Eigen::Vector3d> live_nodes;
    live_nodes.reserve(surface.graph.size());
    for (const GraphNode& n : surface.graph.nodes) live_nodes.push_back(n.g + n.t);
    KdTree3 tree(live_nodes);
    const double max_d = 2.0 * config_.r_node;
    for (const Eigen::Vector3d& p : segment.cloud.vertices)
      if (tree.nearest_distance(p) > max_d) ++clipped;
  }
  surface.clipped_points += clipped;
  diag.clipped = clipped;

  surface.last_mask = segment.pixels;
  surface.snapshot_frames.push_back(state_.frames_processed);
  surface.snapshots.push_back(surface.graph.nodes);
  diag.status = "tracked";
  return 0;
}

FrameDiag Pipeline::process_frame(const DepthFrame& frame, const InstanceMaskFrame& masks) {
  const int findex = state_.frames_processed;
  FrameDiag fdiag;
  fdiag.index = findex;
  fdiag.timestamp = frame.timestamp;

  std::vector<SurfaceSegment> segments =
      split_frame(frame, masks, class_table_, config_.split);

  if (findex == 0) {
    // background first so it always takes surface id 0
    std::stable_sort(segments.begin(), segments.end(),
                     [](const SurfaceSegment& a, const SurfaceSegment& b) {
                       return (a.instance_id == 0) > (b.instance_id == 0);
                     });
    const auto bg = std::find_if(segments.begin(), segments.end(),
                                 [](const SurfaceSegment& s) { return s.instance_id == 0; });
    if (bg == segments.end() ||
        static_cast<int>(bg->cloud.size()) < config_.min_segment_points)
      throw TrackingLostError("first frame has too little valid depth to start the background");
    for (const SurfaceSegment& seg : segments) spawn_surface(seg, frame, findex, fdiag);
    state_.camera.poses.emplace_back(frame.timestamp, RigidTransform::identity());
    state_.frames_processed = 1;
    return fdiag;
  }

  const LiveFrame live = LiveFrame::from(frame);
  const std::vector<int> match = associate_segments(segments, state_, config_.split.min_iou);

  // surface id -> matched segment
  std::vector<int> seg_of_surface(next_surface_id_, -1);
  for (size_t si = 0; si < segments.size(); ++si)
    if (match[si] >= 0) seg_of_surface[match[si]] = static_cast<int>(si);

  // the background (id 0) is tracked first; its inter-frame motion seeds the
  // other surfaces so their solves start near the new camera placement
  RigidTransform camera_delta = RigidTransform::identity();
  bool have_delta = false;

  for (Surface& surface : state_.surfaces) {
    if (surface.status == SurfaceStatus::Retired) continue;
    SurfaceDiag diag;
    diag.id = surface.id;
    diag.class_name = surface.class_name;
    diag.rigid = surface.rigidity == Rigidity::Rigid;
    const int si = seg_of_surface[surface.id];
    if (si < 0) {
      diag.status = "skipped";  // not observed this frame
      fdiag.surfaces.push_back(std::move(diag));
      continue;
    }
    if (have_delta && !surface.is_background) {
      for (GraphNode& n : surface.graph.nodes) {
        n.t = camera_delta.rotation * (n.t + n.g) + camera_delta.translation - n.g;
        n.R = camera_delta.rotation * n.R;
      }
    }
    const RigidTransform bg_before = surface.is_background
                                         ? surface.node_transform()
                                         : RigidTransform::identity();
    track_and_fuse(surface, frame, live, segments[si], diag);
    if (surface.is_background) {
      if (surface.status != SurfaceStatus::Active) {
        fdiag.surfaces.push_back(std::move(diag));
        throw TrackingLostError("background tracking lost at frame " + std::to_string(findex));
      }
      camera_delta = compose(surface.node_transform(), invert(bg_before));
      have_delta = true;
    }
    fdiag.surfaces.push_back(std::move(diag));
  }

  for (size_t si = 0; si < segments.size(); ++si) {
    if (match[si] >= 0 || segments[si].instance_id == 0) continue;
    spawn_surface(segments[si], frame, findex, fdiag);
  }

  const Surface* bg_surface = state_.background();
  if (!bg_surface) throw TrackingLostError("no background surface");
  if (seg_of_surface[bg_surface->id] < 0)
    throw TrackingLostError("background not observed at frame " + std::to_string(findex));
  state_.camera.poses.emplace_back(frame.timestamp, invert(bg_surface->node_transform()));
  state_.frames_processed += 1;
  return fdiag;
}

namespace {

TriangleMesh warp_mesh_by_snapshot(TriangleMesh mesh, const Surface& surface,
                                   const std::vector<GraphNode>& snap) {
  DeformationGraph snap_graph;
  snap_graph.nodes = snap;
  snap_graph.K = surface.graph.K;
  snap_graph.r_node = surface.graph.r_node;
  snap_graph.edges.resize(snap_graph.nodes.size());

  const BlendBinding binding = bind_points(mesh.vertices, snap_graph);
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    if (binding.bound(i))
      mesh.vertices[i] = warp_point(mesh.vertices[i], binding.weights[i], snap_graph);
  }
  return mesh;
}

}  // namespace

TriangleMesh Pipeline::reunite_surface(int surface_id, int frame_index) const {
  for (const Surface& surface : state_.surfaces) {
    if (surface.id != surface_id) continue;
    const std::vector<GraphNode>* snap = surface.snapshot_at(frame_index);
    if (!snap) return {};
    return warp_mesh_by_snapshot(extract_mesh(surface.volume), surface, *snap);
  }
  return {};
}

TriangleMesh Pipeline::reunite(int frame_index) const {
  TriangleMesh out;
  for (const Surface& surface : state_.surfaces) {
    const std::vector<GraphNode>* snap = surface.snapshot_at(frame_index);
    if (!snap) continue;
    const TriangleMesh mesh =
        warp_mesh_by_snapshot(extract_mesh(surface.volume), surface, *snap);
    if (mesh.empty()) continue;

    const int base = static_cast<int>(out.vertices.size());
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
      out.vertices.push_back(mesh.vertices[i]);
      out.colors.push_back(surface_color(surface.id));
    }
    for (const auto& t : mesh.triangles)
      out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return out;
}

TriangleMesh Pipeline::canonical_mesh(int surface_id) const {
  for (const Surface& s : state_.surfaces)
    if (s.id == surface_id) return extract_mesh(s.volume);
  return {};
}

RunSummary run_sequence(const RunConfig& config, const RunOptions& options,
                        const std::function<void(int, int)>& progress) {
  SequenceManifest manifest =
      load_tum_sequence(options.dataset_dir, 0.02, options.fallback_intrinsics);
  if (config.depth_scale > 0) manifest.intrinsics.depth_scale = config.depth_scale;
  if (!options.rigid_only && !options.mask_dir.empty())
    attach_masks(manifest, options.mask_dir);

  const int total = static_cast<int>(manifest.entries.size());
  const int begin = std::clamp(options.frame_begin, 0, total);
  const int end = options.frame_end < 0 ? total : std::clamp(options.frame_end, begin, total);
  if (begin >= end) throw std::runtime_error("no frames to process");

  ClassTable table = ClassTable::coco_default();
  const std::string table_path =
      options.rigid_only ? std::string{} : config.class_table_path;
  if (!table_path.empty()) table.merge_json_file(table_path);

  fs::create_directories(options.out_dir);
  Pipeline pipeline(config, table);

  json frame_diags = json::array();
  bool aborted = false;
  std::string abort_message;
  for (int i = begin; i < end; ++i) {
    const DepthFrame frame = load_frame(manifest, i);
    InstanceMaskFrame mask_frame;
    if (options.rigid_only || manifest.entries[i].mask_path.empty()) {
      mask_frame.labels = Image<uint16_t>(frame.depth.width, frame.depth.height, 0);
    } else {
      mask_frame = load_mask_frame(manifest.entries[i], frame.depth.width, frame.depth.height);
    }
    try {
      const FrameDiag fd = pipeline.process_frame(frame, mask_frame);
      json jf = {{"index", fd.index}, {"timestamp", fd.timestamp}, {"surfaces", json::array()}};
      for (const SurfaceDiag& sd : fd.surfaces) jf["surfaces"].push_back(diag_to_json(sd));
      frame_diags.push_back(std::move(jf));
    } catch (const TrackingLostError& e) {
      aborted = true;
      abort_message = e.what();
      break;
    }
    if (progress) progress(i - begin + 1, end - begin);
  }

  const SceneState& state = pipeline.state();
  RunSummary summary;
  summary.frames_processed = state.frames_processed;
  summary.surfaces_total = static_cast<int>(state.surfaces.size());

  // outputs (also flushed when the run aborted mid-sequence)
  summary.trajectory_path = (fs::path(options.out_dir) / "trajectory.txt").string();
  write_trajectory(state.camera, summary.trajectory_path);

  for (const Surface& s : state.surfaces) {
    const TriangleMesh mesh = pipeline.canonical_mesh(s.id);
    write_mesh(mesh, (fs::path(options.out_dir) /
                      ("surface_" + std::to_string(s.id) + "_canonical.ply"))
                         .string());
    if (options.dump_volumes)
      save_volume(s.volume, (fs::path(options.out_dir) /
                             ("surface_" + std::to_string(s.id) + ".tsdf"))
                                .string());
  }

  std::vector<int> export_frames;
  if (state.frames_processed > 0) {
    if (options.export_every > 0)
      for (int f = 0; f < state.frames_processed; f += options.export_every)
        export_frames.push_back(f);
    export_frames.push_back(state.frames_processed - 1);
    std::sort(export_frames.begin(), export_frames.end());
    export_frames.erase(std::unique(export_frames.begin(), export_frames.end()),
                        export_frames.end());
  }
  for (int f : export_frames) {
    const TriangleMesh mesh = pipeline.reunite(f);
    write_mesh(mesh,
               (fs::path(options.out_dir) / ("reunited_" + std::to_string(f) + ".ply")).string());
  }

  json report;
  report["frames_processed"] = state.frames_processed;
  report["aborted"] = aborted;
  if (aborted) report["abort_message"] = abort_message;
  report["frames"] = std::move(frame_diags);
  report["surfaces"] = json::array();
  size_t clipped_total = 0;
  int retired = 0;
  for (const Surface& s : state.surfaces) {
    report["surfaces"].push_back({{"id", s.id},
                                  {"class", s.class_name},
                                  {"rigid", s.rigidity == Rigidity::Rigid},
                                  {"background", s.is_background},
                                  {"status", s.status == SurfaceStatus::Retired  ? "retired"
                                             : s.status == SurfaceStatus::Lost ? "lost"
                                                                               : "active"},
                                  {"spawned_frame", s.spawned_frame},
                                  {"nodes", s.graph.size()},
                                  {"clipped_points", s.clipped_points}});
    clipped_total += s.clipped_points;
    retired += s.status == SurfaceStatus::Retired;
  }
  report["clipped_points_total"] = clipped_total;
  summary.surfaces_retired = retired;
  summary.report_path = (fs::path(options.out_dir) / "report.json").string();
  std::ofstream rep(summary.report_path);
  rep << report.dump(2) << "\n";

  if (aborted) throw TrackingLostError(abort_message);
  return summary;
}

}  // namespace splitfusion
