// splitfusion command-line frontend. Talks to the shared library through the
// C API only.
#include <cstdio>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "splitfusion/splitfusion.h"

namespace {

int report_error(const char* what, sf_status st) {
  std::fprintf(stderr, "error: %s failed (%d): %s\n", what, static_cast<int>(st),
               sf_last_error());
  return 1;
}

bool parse_frame_range(const std::string& spec, int& begin, int& end) {
  if (spec.empty()) return true;
  const auto dots = spec.find("..");
  if (dots == std::string::npos) return false;
  try {
    begin = std::stoi(spec.substr(0, dots));
    end = std::stoi(spec.substr(dots + 2));
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splitfusion: split-scene rigid/non-rigid RGB-D reconstruction"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Reconstruct a TUM-layout RGB-D sequence");
  std::string dataset, masks, config_path, out_dir, frames_spec;
  int export_every = 0;
  bool rigid_only = false, dump_volumes = false, quiet = false;
  run->add_option("--dataset", dataset, "dataset directory (TUM layout)")->required();
  run->add_option("--masks", masks, "instance mask directory");
  run->add_option("--config", config_path, "JSON config file");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--frames", frames_spec, "frame range a..b (end exclusive)");
  run->add_option("--export-every", export_every, "write a reunited mesh every N frames");
  bool verbose = false;
  run->add_flag("--rigid-only", rigid_only, "ignore masks, track a single rigid scene");
  run->add_flag("--dump-volumes", dump_volumes, "write TSDF volume dumps");
  run->add_flag("--quiet", quiet, "suppress per-frame progress");
  run->add_flag("--verbose", verbose, "print one JSON line per solver iteration");

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset from a scene script");
  std::string script_path, synth_out;
  synth->add_option("--script", script_path, "scene script JSON")->required();
  synth->add_option("--out", synth_out, "output dataset directory")->required();

  // ate
  auto* ate = app.add_subcommand("ate", "Absolute trajectory error of two TUM trajectories");
  std::string est_path, ref_path;
  ate->add_option("--est", est_path, "estimated trajectory file")->required();
  ate->add_option("--ref", ref_path, "reference trajectory file")->required();

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    const sf_status st = sf_synth_export(script_path.c_str(), synth_out.c_str());
    if (st != SF_OK) return report_error("synth", st);
    std::printf("dataset written to %s\n", synth_out.c_str());
    return 0;
  }

  if (ate->parsed()) {
    char* report = nullptr;
    const sf_status st = sf_ate_evaluate(est_path.c_str(), ref_path.c_str(), &report);
    if (st != SF_OK) return report_error("ate", st);
    std::printf("%s\n", report);
    sf_string_free(report);
    return 0;
  }

  // run
  int frame_begin = 0, frame_end = -1;
  if (!parse_frame_range(frames_spec, frame_begin, frame_end)) {
    std::fprintf(stderr, "error: --frames expects a..b\n");
    return 1;
  }

  sf_config* cfg = nullptr;
  sf_status st = config_path.empty() ? sf_config_create(&cfg)
                                     : sf_config_load(config_path.c_str(), &cfg);
  if (st != SF_OK) return report_error("config", st);

  sf_run_options options{};
  options.dataset_dir = dataset.c_str();
  options.mask_dir = masks.empty() ? nullptr : masks.c_str();
  options.out_dir = out_dir.c_str();
  options.frame_begin = frame_begin;
  options.frame_end = frame_end;
  options.export_every = export_every;
  options.rigid_only = rigid_only ? 1 : 0;
  options.dump_volumes = dump_volumes ? 1 : 0;

  sf_pipeline* pipeline = nullptr;
  st = sf_pipeline_create(cfg, &options, &pipeline);
  if (st != SF_OK) {
    sf_config_destroy(cfg);
    return report_error("run", st);
  }

  const int total = sf_pipeline_frame_count(pipeline);
  int done = 0;
  while (!done) {
    char* diag = nullptr;
    st = sf_pipeline_step(pipeline, &done, verbose ? &diag : nullptr);
    if (diag) {
      // one JSON line per solver iteration
      const auto frame = nlohmann::json::parse(diag);
      sf_string_free(diag);
      for (const auto& surface : frame["surfaces"]) {
        for (const auto& it : surface["iterations"]) {
          nlohmann::json line = it;
          line["surface_id"] = surface["id"];
          std::printf("%s\n", line.dump().c_str());
        }
      }
    }
    if (st != SF_OK) break;
    if (!quiet)
      std::fprintf(stderr, "\rframe %d/%d", sf_pipeline_frames_processed(pipeline), total);
  }
  if (!quiet) std::fprintf(stderr, "\n");

  char* summary = nullptr;
  const sf_status fin = sf_pipeline_finish(pipeline, &summary);
  if (summary) {
    std::printf("%s\n", summary);
    sf_string_free(summary);
  }
  sf_pipeline_destroy(pipeline);
  sf_config_destroy(cfg);

  if (st != SF_OK) return report_error("run", st);
  if (fin != SF_OK) return report_error("finish", fin);
  return 0;
}
