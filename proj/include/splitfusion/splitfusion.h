/* splitfusion — split-scene rigid/non-rigid RGB-D reconstruction.
 *
 * C API of the shared library. All heap objects are opaque handles released
 * with their sf_*_destroy / sf_string_free function; functions return
 * sf_status and the last error message is kept per thread.
 */
#ifndef SPLITFUSION_H
#define SPLITFUSION_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SF_API __declspec(dllexport)
#else
#define SF_API __attribute__((visibility("default")))
#endif

typedef enum sf_status {
  SF_OK = 0,
  SF_ERROR_INVALID_ARGUMENT = 1,
  SF_ERROR_IO = 2,
  SF_ERROR_TRACKING_LOST = 3,
  SF_ERROR_RUNTIME = 4
} sf_status;

SF_API const char* sf_version(void);

/* Message describing the most recent failure on this thread ("" if none). */
SF_API const char* sf_last_error(void);

/* Strings returned through char** out-parameters are heap-allocated. */
SF_API void sf_string_free(char* s);

/* ---- configuration ------------------------------------------------- */

typedef struct sf_config sf_config;

SF_API sf_status sf_config_create(sf_config** out);
SF_API sf_status sf_config_load(const char* json_path, sf_config** out);
SF_API sf_status sf_config_merge_json(sf_config* cfg, const char* json_text);
SF_API sf_status sf_config_dump(const sf_config* cfg, char** json_out);
SF_API void sf_config_destroy(sf_config* cfg);

/* ---- full reconstruction runs --------------------------------------- */

typedef struct sf_run_options {
  const char* dataset_dir; /* TUM layout root (required) */
  const char* mask_dir;    /* instance masks; NULL = none */
  const char* out_dir;     /* outputs (required) */
  int frame_begin;         /* first frame index */
  int frame_end;           /* exclusive; -1 = all */
  int export_every;        /* reunited mesh every N frames; 0 = final only */
  int rigid_only;          /* ignore masks, single background surface */
  int dump_volumes;        /* write surface_<id>.tsdf volume dumps */
} sf_run_options;

typedef struct sf_pipeline sf_pipeline;

SF_API sf_status sf_pipeline_create(const sf_config* cfg, const sf_run_options* options,
                                    sf_pipeline** out);
/* Processes one frame; returns SF_OK and sets *done = 1 when finished.
 * frame_diag_json (optional) receives per-surface diagnostics. */
SF_API sf_status sf_pipeline_step(sf_pipeline* p, int* done, char** frame_diag_json);
SF_API int sf_pipeline_frame_count(const sf_pipeline* p);
SF_API int sf_pipeline_frames_processed(const sf_pipeline* p);
/* Writes trajectory, meshes and report.json into out_dir. */
SF_API sf_status sf_pipeline_finish(sf_pipeline* p, char** summary_json);
SF_API void sf_pipeline_destroy(sf_pipeline* p);

/* One-shot convenience: create + step all + finish. */
SF_API sf_status sf_run_sequence(const sf_config* cfg, const sf_run_options* options,
                                 char** summary_json);

/* ---- synthetic dataset generation ----------------------------------- */

SF_API sf_status sf_synth_export(const char* script_json_path, const char* out_dir);

/* ---- trajectory evaluation ------------------------------------------ */

/* ATE RMSE of estimated vs reference (TUM trajectory files); the report is
 * returned as JSON. */
SF_API sf_status sf_ate_evaluate(const char* estimated_path, const char* reference_path,
                                 char** report_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SPLITFUSION_H */
