#include "splitfusion/splitfusion.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "splitfusion/config.hpp"
#include "splitfusion/evaluation.hpp"
#include "splitfusion/pipeline.hpp"
#include "splitfusion/synthetic_scenes.hpp"

using json = nlohmann::json;
namespace sf = splitfusion;

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

sf_status fail(sf_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
sf_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const sf::TrackingLostError& e) {
    return fail(SF_ERROR_TRACKING_LOST, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(SF_ERROR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(SF_ERROR_RUNTIME, e.what());
  }
}

}  // namespace

struct sf_config {
  sf::RunConfig cfg;
};

struct sf_pipeline {
  sf::RunConfig cfg;
  sf::RunOptions options;
  sf::SequenceManifest manifest;
  std::unique_ptr<sf::Pipeline> pipeline;
  int begin = 0;
  int end = 0;
  int next = 0;
  json frame_diags = json::array();
  bool aborted = false;
  std::string abort_message;
};

extern "C" {

const char* sf_version(void) { return "0.1.0"; }

const char* sf_last_error(void) { return g_last_error.c_str(); }

void sf_string_free(char* s) { delete[] s; }

sf_status sf_config_create(sf_config** out) {
  if (!out) return fail(SF_ERROR_INVALID_ARGUMENT, "out is null");
  return guarded([&] {
    *out = new sf_config{};
    return SF_OK;
  });
}

sf_status sf_config_load(const char* json_path, sf_config** out) {
  if (!json_path || !out) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    auto cfg = sf::RunConfig::from_json_file(json_path);
    *out = new sf_config{std::move(cfg)};
    return SF_OK;
  });
}

sf_status sf_config_merge_json(sf_config* cfg, const char* json_text) {
  if (!cfg || !json_text) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    // overlay: parse current dump, merge patch, reparse
    json base = json::parse(cfg->cfg.to_json_text());
    base.merge_patch(json::parse(json_text));
    cfg->cfg = sf::RunConfig::from_json_text(base.dump());
    return SF_OK;
  });
}

sf_status sf_config_dump(const sf_config* cfg, char** json_out) {
  if (!cfg || !json_out) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  *json_out = dup_string(cfg->cfg.to_json_text());
  return SF_OK;
}

void sf_config_destroy(sf_config* cfg) { delete cfg; }

static sf_status pipeline_create_impl(const sf_config* cfg, const sf_run_options* options,
                                      sf_pipeline** out) {
  auto p = std::make_unique<sf_pipeline>();
  p->cfg = cfg->cfg;
  p->options.dataset_dir = options->dataset_dir ? options->dataset_dir : "";
  p->options.mask_dir = options->mask_dir ? options->mask_dir : "";
  p->options.out_dir = options->out_dir ? options->out_dir : "";
  p->options.frame_begin = options->frame_begin;
  p->options.frame_end = options->frame_end;
  p->options.export_every = options->export_every;
  p->options.rigid_only = options->rigid_only != 0;
  p->options.dump_volumes = options->dump_volumes != 0;
  if (p->options.dataset_dir.empty() || p->options.out_dir.empty())
    throw std::invalid_argument("dataset_dir and out_dir are required");

  p->manifest = sf::load_tum_sequence(p->options.dataset_dir, 0.02);
  if (p->cfg.depth_scale > 0) p->manifest.intrinsics.depth_scale = p->cfg.depth_scale;
  if (!p->options.rigid_only && !p->options.mask_dir.empty())
    sf::attach_masks(p->manifest, p->options.mask_dir);

  const int total = static_cast<int>(p->manifest.entries.size());
  p->begin = std::clamp(p->options.frame_begin, 0, total);
  p->end = p->options.frame_end < 0 ? total
                                    : std::clamp(p->options.frame_end, p->begin, total);
  if (p->begin >= p->end) throw std::invalid_argument("no frames to process");
  p->next = p->begin;

  sf::ClassTable table = sf::ClassTable::coco_default();
  if (!p->options.rigid_only && !p->cfg.class_table_path.empty())
    table.merge_json_file(p->cfg.class_table_path);
  p->pipeline = std::make_unique<sf::Pipeline>(p->cfg, std::move(table));
  *out = p.release();
  return SF_OK;
}

sf_status sf_pipeline_create(const sf_config* cfg, const sf_run_options* options,
                             sf_pipeline** out) {
  if (!cfg || !options || !out) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] { return pipeline_create_impl(cfg, options, out); });
}

sf_status sf_pipeline_step(sf_pipeline* p, int* done, char** frame_diag_json) {
  if (!p || !done) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  *done = 0;
  if (p->aborted) return fail(SF_ERROR_TRACKING_LOST, p->abort_message);
  if (p->next >= p->end) {
    *done = 1;
    return SF_OK;
  }
  return guarded([&] {
    const sf::DepthFrame frame = sf::load_frame(p->manifest, p->next);
    sf::InstanceMaskFrame mask_frame;
    if (p->options.rigid_only || p->manifest.entries[p->next].mask_path.empty()) {
      mask_frame.labels = sf::Image<uint16_t>(frame.depth.width, frame.depth.height, 0);
    } else {
      mask_frame = sf::load_mask_frame(p->manifest.entries[p->next], frame.depth.width,
                                       frame.depth.height);
    }
    try {
      const sf::FrameDiag fd = p->pipeline->process_frame(frame, mask_frame);
      json jf = {{"index", fd.index}, {"timestamp", fd.timestamp}, {"surfaces", json::array()}};
      for (const sf::SurfaceDiag& sd : fd.surfaces) {
        json iters = json::array();
        for (const sf::IterationDiag& it : sd.iterations) {
          iters.push_back({{"outer", it.outer},
                           {"inner", it.inner},
                           {"e_data", it.e_data},
                           {"e_prior", it.e_prior},
                           {"n_corr", it.n_corr},
                           {"step_norm", it.step_norm},
                           {"accepted", it.accepted}});
        }
        jf["surfaces"].push_back({{"id", sd.id},
                                  {"class", sd.class_name},
                                  {"rigid", sd.rigid},
                                  {"status", sd.status},
                                  {"n_corr", sd.n_corr},
                                  {"e_data", sd.e_data},
                                  {"e_prior", sd.e_prior},
                                  {"clipped", sd.clipped},
                                  {"iterations", iters}});
      }
      if (frame_diag_json) *frame_diag_json = dup_string(jf.dump());
      p->frame_diags.push_back(std::move(jf));
    } catch (const sf::TrackingLostError& e) {
      p->aborted = true;
      p->abort_message = e.what();
      return fail(SF_ERROR_TRACKING_LOST, e.what());
    }
    p->next += 1;
    if (p->next >= p->end) *done = 1;
    return SF_OK;
  });
}

int sf_pipeline_frame_count(const sf_pipeline* p) { return p ? p->end - p->begin : 0; }

int sf_pipeline_frames_processed(const sf_pipeline* p) {
  return p ? p->pipeline->state().frames_processed : 0;
}

sf_status sf_pipeline_finish(sf_pipeline* p, char** summary_json) {
  if (!p) return fail(SF_ERROR_INVALID_ARGUMENT, "null pipeline");
  return guarded([&] {
    namespace fs = std::filesystem;
    const sf::SceneState& state = p->pipeline->state();
    fs::create_directories(p->options.out_dir);

    const std::string traj_path =
        (fs::path(p->options.out_dir) / "trajectory.txt").string();
    sf::write_trajectory(state.camera, traj_path);

    for (const sf::Surface& s : state.surfaces) {
      sf::write_mesh(p->pipeline->canonical_mesh(s.id),
                     (fs::path(p->options.out_dir) /
                      ("surface_" + std::to_string(s.id) + "_canonical.ply"))
                         .string());
      if (p->options.dump_volumes)
        sf::save_volume(s.volume, (fs::path(p->options.out_dir) /
                                   ("surface_" + std::to_string(s.id) + ".tsdf"))
                                      .string());
    }
    std::vector<int> export_frames;
    if (state.frames_processed > 0) {
      if (p->options.export_every > 0)
        for (int f = 0; f < state.frames_processed; f += p->options.export_every)
          export_frames.push_back(f);
      export_frames.push_back(state.frames_processed - 1);
      std::sort(export_frames.begin(), export_frames.end());
      export_frames.erase(std::unique(export_frames.begin(), export_frames.end()),
                          export_frames.end());
    }
    for (int f : export_frames) {
      sf::write_mesh(p->pipeline->reunite(f),
                     (fs::path(p->options.out_dir) / ("reunited_" + std::to_string(f) + ".ply"))
                         .string());
    }

    json report;
    report["frames_processed"] = state.frames_processed;
    report["aborted"] = p->aborted;
    if (p->aborted) report["abort_message"] = p->abort_message;
    report["frames"] = p->frame_diags;
    report["surfaces"] = json::array();
    size_t clipped_total = 0;
    for (const sf::Surface& s : state.surfaces) {
      report["surfaces"].push_back(
          {{"id", s.id},
           {"class", s.class_name},
           {"rigid", s.rigidity == sf::Rigidity::Rigid},
           {"background", s.is_background},
           {"status", s.status == sf::SurfaceStatus::Retired  ? "retired"
                      : s.status == sf::SurfaceStatus::Lost ? "lost"
                                                            : "active"},
           {"spawned_frame", s.spawned_frame},
           {"nodes", s.graph.size()},
           {"clipped_points", s.clipped_points}});
      clipped_total += s.clipped_points;
    }
    report["clipped_points_total"] = clipped_total;
    const std::string report_path = (fs::path(p->options.out_dir) / "report.json").string();
    std::ofstream rep(report_path);
    rep << report.dump(2) << "\n";

    if (summary_json) {
      json s = {{"frames_processed", state.frames_processed},
                {"surfaces", state.surfaces.size()},
                {"trajectory", traj_path},
                {"report", report_path},
                {"aborted", p->aborted}};
      *summary_json = dup_string(s.dump());
    }
    return p->aborted ? fail(SF_ERROR_TRACKING_LOST, p->abort_message) : SF_OK;
  });
}

void sf_pipeline_destroy(sf_pipeline* p) { delete p; }

sf_status sf_run_sequence(const sf_config* cfg, const sf_run_options* options,
                          char** summary_json) {
  if (!cfg || !options) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  sf_pipeline* p = nullptr;
  sf_status st = sf_pipeline_create(cfg, options, &p);
  if (st != SF_OK) return st;
  int done = 0;
  while (!done) {
    st = sf_pipeline_step(p, &done, nullptr);
    if (st != SF_OK) break;
  }
  const sf_status fin = sf_pipeline_finish(p, summary_json);
  sf_pipeline_destroy(p);
  return st != SF_OK ? st : fin;
}

sf_status sf_synth_export(const char* script_json_path, const char* out_dir) {
  if (!script_json_path || !out_dir) return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const sf::SceneScript script = sf::SceneScript::from_json_file(script_json_path);
    sf::export_dataset(script, out_dir);
    return SF_OK;
  });
}

sf_status sf_ate_evaluate(const char* estimated_path, const char* reference_path,
                          char** report_json) {
  if (!estimated_path || !reference_path || !report_json)
    return fail(SF_ERROR_INVALID_ARGUMENT, "null argument");
  return guarded([&] {
    const sf::Trajectory est = sf::read_trajectory(estimated_path);
    const sf::Trajectory ref = sf::read_trajectory(reference_path);
    const sf::AteReport report = sf::ate_rmse(est, ref);
    Eigen::Quaterniond q(report.alignment.rotation);
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    json j = {{"rmse", report.rmse},
              {"mean", report.mean},
              {"median", report.median},
              {"max", report.max},
              {"matched_pairs", report.matched_pairs},
              {"errors", report.errors},
              {"alignment",
               {{"translation",
                 {report.alignment.translation.x(), report.alignment.translation.y(),
                  report.alignment.translation.z()}},
                {"quaternion_xyzw", {q.x(), q.y(), q.z(), q.w()}}}}};
    *report_json = dup_string(j.dump(2));
    return SF_OK;
  });
}

}  // extern "C"
