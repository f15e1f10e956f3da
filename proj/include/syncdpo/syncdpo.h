/*
 * Copyright (c) 2026, The syncdpo-lab authors
 * SPDX-License-Identifier: Apache-2.0
 */

/*
 * C interface to the syncdpo toy laboratory: synthetic synchronized
 * video/audio data, flow-matching training, preference optimization with
 * rule-based temporal negatives, evaluation with a cross-correlation
 * synchronization oracle, and reporting.
 *
 * Conventions:
 *   - Every fallible call returns sdpo_status; SDPO_OK is 0.
 *   - On failure, sdpo_last_error() returns a message for the calling thread,
 *     valid until the next sdpo_* call on that thread.
 *   - Handles are opaque and owned by the caller; release them with the
 *     matching *_destroy function. Strings returned through char** are
 *     released with sdpo_free_string.
 *   - Track buffers are row-major (frames x channels) float32.
 */

#ifndef SYNCDPO_SYNCDPO_H_
#define SYNCDPO_SYNCDPO_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SYNCDPO_API
#elif defined(SYNCDPO_BUILDING_LIBRARY)
#define SYNCDPO_API __attribute__((visibility("default")))
#else
#define SYNCDPO_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sdpo_status {
  SDPO_OK = 0,
  SDPO_ERR_INVALID_ARGUMENT = 1,
  SDPO_ERR_IO = 2,
  SDPO_ERR_FORMAT = 3,
  SDPO_ERR_NUMERIC = 4,
  SDPO_ERR_INTERNAL = 5
} sdpo_status;

typedef struct sdpo_config sdpo_config;
typedef struct sdpo_model sdpo_model;

SYNCDPO_API const char* sdpo_version(void);
SYNCDPO_API const char* sdpo_status_string(sdpo_status status);
SYNCDPO_API const char* sdpo_last_error(void);
SYNCDPO_API void sdpo_free_string(char* s);

/* ---- toy world ------------------------------------------------------------ */

typedef struct sdpo_grid {
  double duration;
  double video_rate;
  int32_t video_frames;
  int32_t video_channels;
  double audio_rate;
  int32_t audio_frames;
  int32_t audio_channels;
  int32_t num_classes;
  int32_t state_dim;
} sdpo_grid;

typedef struct sdpo_sync {
  double offset; /* seconds, positive when audio lags video */
  double score;  /* peak normalized cross-correlation */
  int32_t degenerate;
} sdpo_sync;

SYNCDPO_API sdpo_status sdpo_default_grid(sdpo_grid* out);

/* Writes n synthetic pairs drawn from `seed` to a dataset container file. */
SYNCDPO_API sdpo_status sdpo_generate_dataset(uint64_t seed, int64_t n, const char* path);

/* Reads the manifest of a dataset file. */
SYNCDPO_API sdpo_status sdpo_dataset_info(const char* path, uint64_t* seed, int64_t* n);

/* Synchronization oracle on default-grid tracks (video 40x4, audio 160x2). */
SYNCDPO_API sdpo_status sdpo_measure_offset(const float* video, size_t video_len, const float* audio,
                                            size_t audio_len, sdpo_sync* out);

/* ---- configuration -------------------------------------------------------- */

SYNCDPO_API sdpo_status sdpo_config_create(sdpo_config** out);
SYNCDPO_API void sdpo_config_destroy(sdpo_config* cfg);
/* Flat key=value or JSON file; unknown keys are rejected. */
SYNCDPO_API sdpo_status sdpo_config_load(sdpo_config* cfg, const char* path);
SYNCDPO_API sdpo_status sdpo_config_set(sdpo_config* cfg, const char* key, const char* value);
SYNCDPO_API sdpo_status sdpo_config_to_json(const sdpo_config* cfg, char** json_out);

/* ---- training ------------------------------------------------------------- */

typedef struct sdpo_train_summary {
  int64_t steps;
  double first_loss;
  double final_val_fm_loss;
  double final_mean_abs_offset;
  double final_mean_score;
  int64_t sampler_calls;
  int64_t skipped_pairs;
  double wall_time_per_step;
} sdpo_train_summary;

/* Runs sft, dpo or syncdpo per the config's method; writes the run directory. */
SYNCDPO_API sdpo_status sdpo_train(const sdpo_config* cfg, sdpo_train_summary* out);

/* ---- models --------------------------------------------------------------- */

SYNCDPO_API sdpo_status sdpo_model_load(const char* ckpt_path, int use_ema, sdpo_model** out);
SYNCDPO_API void sdpo_model_destroy(sdpo_model* model);
SYNCDPO_API sdpo_status sdpo_model_num_params(const sdpo_model* model, size_t* out);
/* Generates one packed state (video block then audio block) for `class_id`. */
SYNCDPO_API sdpo_status sdpo_model_sample(const sdpo_model* model, int32_t class_id, uint64_t seed, int32_t steps,
                                          float* state_out, size_t state_len);

/* ---- evaluation and reporting --------------------------------------------- */

typedef struct sdpo_eval_summary {
  int64_t n;
  int64_t degenerate;
  double mean_abs_offset;
  double mean_score;
} sdpo_eval_summary;

typedef struct sdpo_gradnorm_summary {
  int64_t n;
  int64_t valid;
  int64_t degenerate;
  double median;
  double mean;
  double fraction_gt_1;
} sdpo_gradnorm_summary;

/* csv_out may be NULL. */
SYNCDPO_API sdpo_status sdpo_evaluate(const char* ckpt_path, int64_t n, uint64_t seed, int use_ema,
                                      const char* csv_out, sdpo_eval_summary* out);

/* ref_ckpt may be NULL. Also writes <csv_out stem>.summary.json. */
SYNCDPO_API sdpo_status sdpo_diag_gradnorm(const char* ckpt_path, int64_t n, uint64_t seed, const char* csv_out,
                                           const char* ref_ckpt, sdpo_gradnorm_summary* out);

/* Aligned text table in *table_out; CSV written to csv_out when not NULL. */
SYNCDPO_API sdpo_status sdpo_compare(const char* const* run_dirs, size_t count, const char* csv_out,
                                     char** table_out);

SYNCDPO_API sdpo_status sdpo_plot(const char* run_dir, char** svg_path_out);

#ifdef __cplusplus
}
#endif

#endif /* SYNCDPO_SYNCDPO_H_ */
