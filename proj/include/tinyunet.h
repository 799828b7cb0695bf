/*
 * Copyright 2026 The TinyUNet Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the tinyunet engine. Objects are opaque handles owned by the
 * caller and released with the matching *_free function. Every fallible call
 * returns a tu_status; on failure tu_last_error() describes what went wrong
 * (the message is thread-local and valid until the next failing call on the
 * same thread).
 */
#ifndef TINYUNET_H
#define TINYUNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(TINYUNET_BUILDING_LIBRARY)
#define TU_API __attribute__((visibility("default")))
#else
#define TU_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tu_status {
    TU_OK = 0,
    TU_ERR_CONFIG = 1,   /* invalid configuration or tensor shapes */
    TU_ERR_USAGE = 2,    /* invalid arguments or call sequence */
    TU_ERR_NUMERIC = 3,  /* NaN/Inf or degenerate statistics */
    TU_ERR_FORMAT = 4,   /* malformed input file */
    TU_ERR_IO = 5,       /* filesystem failure */
    TU_ERR_INTERNAL = 6  /* unexpected failure (e.g. out of memory) */
} tu_status;

TU_API const char* tu_last_error(void);
TU_API const char* tu_status_name(tu_status status);
TU_API const char* tu_version(void);

typedef struct tu_shape {
    int32_t n;
    int32_t c;
    int32_t h;
    int32_t w;
} tu_shape;

/* ---- model ------------------------------------------------------------ */

typedef struct tu_model_config {
    int32_t base_width;
    int32_t depth;
    int32_t in_channels;
    int32_t out_channels;
    int32_t use_batchnorm;
    float bn_momentum;
    float bn_epsilon;
} tu_model_config;

/* Defaults: base 8, depth 4, 1 -> 1 channels, batch norm on (0.1, 1e-5). */
TU_API void tu_model_config_init(tu_model_config* config);

typedef struct tu_model tu_model;

TU_API tu_status tu_model_build(const tu_model_config* config, uint64_t seed, tu_model** out);
TU_API tu_status tu_model_load(const char* path, tu_model** out);
TU_API tu_status tu_model_save(const tu_model* model, const char* path, uint64_t* bytes_written);
TU_API tu_status tu_model_get_config(const tu_model* model, tu_model_config* out);
TU_API void tu_model_free(tu_model* model);

/* Eval-mode forward on a caller-owned NCHW buffer; `output` receives
 * n * out_channels * h * w values. Extents must be multiples of 2^depth. */
TU_API tu_status tu_model_infer(const tu_model* model, tu_shape input, const float* data,
                                float* output, size_t output_len);

/* ---- accounting ------------------------------------------------------- */

typedef struct tu_layer_params {
    const char* name;
    const char* kind;
    int64_t trainable;
    int64_t non_trainable;
} tu_layer_params;

typedef struct tu_param_report tu_param_report;

TU_API tu_status tu_param_report_create(const tu_model* model, tu_param_report** out);
TU_API size_t tu_param_report_layer_count(const tu_param_report* report);
/* Strings in `out` live as long as the report. */
TU_API tu_status tu_param_report_layer(const tu_param_report* report, size_t index, tu_layer_params* out);
TU_API void tu_param_report_totals(const tu_param_report* report, int64_t* trainable, int64_t* non_trainable);
TU_API void tu_param_report_free(tu_param_report* report);

typedef struct tu_layer_flops {
    const char* name;
    const char* kind;
    int64_t macs;
    int64_t elementwise;
} tu_layer_flops;

typedef struct tu_flop_report tu_flop_report;

TU_API tu_status tu_flop_report_create(const tu_model_config* config, tu_shape input, tu_flop_report** out);
TU_API size_t tu_flop_report_layer_count(const tu_flop_report* report);
TU_API tu_status tu_flop_report_layer(const tu_flop_report* report, size_t index, tu_layer_flops* out);
TU_API void tu_flop_report_totals(const tu_flop_report* report, int64_t* macs, int64_t* elementwise);
TU_API void tu_flop_report_free(tu_flop_report* report);

/* ---- datasets --------------------------------------------------------- */

typedef struct tu_dataset tu_dataset;

/* Loads every pair listed in a tab-separated manifest. */
TU_API tu_status tu_dataset_load(const char* manifest_path, int32_t zscore, tu_dataset** out);
/* Seeded synthetic ellipse dataset; size must be a multiple of 16. */
TU_API tu_status tu_dataset_synthetic(int32_t count, int32_t size, uint64_t seed, tu_dataset** out);
TU_API size_t tu_dataset_size(const tu_dataset* dataset);
TU_API const char* tu_dataset_source(const tu_dataset* dataset, size_t index);
/* Writes PGM pairs and `dir`/manifest.tsv. */
TU_API tu_status tu_dataset_write(const tu_dataset* dataset, const char* dir);
/* fractions = {train, val, test}; each output is a new handle. */
TU_API tu_status tu_dataset_split(const tu_dataset* dataset, const double fractions[3], uint64_t seed,
                                  tu_dataset** train, tu_dataset** val, tu_dataset** test);
TU_API void tu_dataset_free(tu_dataset* dataset);

/* ---- training and evaluation ------------------------------------------ */

typedef enum tu_loss { TU_LOSS_DICE = 0, TU_LOSS_DICE_BCE = 1 } tu_loss;

typedef struct tu_train_config {
    double learning_rate;
    int32_t epochs;
    int32_t batch_size;
    int32_t loss; /* tu_loss */
    double smooth;
    double threshold;
    uint64_t seed;
    double beta1;
    double beta2;
    double adam_epsilon;
} tu_train_config;

/* Defaults: lr 1e-5, 30 epochs, batch 8, soft dice (smooth 1), threshold 0.5,
 * seed 42, Adam (0.9, 0.999, 1e-8). */
TU_API void tu_train_config_init(tu_train_config* config);

typedef struct tu_epoch_record {
    int32_t epoch;
    double train_loss;
    int32_t has_val;
    double val_dice;
    double val_loss;
    double seconds;
} tu_epoch_record;

typedef void (*tu_epoch_callback)(const tu_epoch_record* record, void* user);

typedef struct tu_fit_summary {
    int32_t epochs_run;
    int32_t best_epoch;
    int32_t has_val;
    double best_val_dice;
    int64_t steps;
} tu_fit_summary;

/* `val` may be NULL. The model ends holding its best-validation parameters. */
TU_API tu_status tu_fit(tu_model* model, const tu_dataset* train, const tu_dataset* val,
                        const tu_train_config* config, tu_epoch_callback on_epoch, void* user,
                        tu_fit_summary* summary);

/* Metrics-log header and rows ("epoch,train_loss,val_dice,seconds"). Writes
 * at most `capacity` bytes including the terminator. */
TU_API const char* tu_metrics_header(void);
TU_API tu_status tu_metrics_line(const tu_epoch_record* record, int32_t include_time, char* buffer,
                                 size_t capacity);

typedef struct tu_eval_report tu_eval_report;

TU_API tu_status tu_evaluate(const tu_model* model, const tu_dataset* dataset, double threshold,
                             tu_eval_report** out);
TU_API size_t tu_eval_report_count(const tu_eval_report* report);
TU_API double tu_eval_report_dice(const tu_eval_report* report, size_t index);
TU_API double tu_eval_report_mean(const tu_eval_report* report);
TU_API double tu_eval_report_max(const tu_eval_report* report);
TU_API void tu_eval_report_free(tu_eval_report* report);

/* Segments one image file (PGM or tensor) and writes a {0,255} PGM mask of
 * the same extent. */
TU_API tu_status tu_infer_file(const tu_model* model, const char* image_path, const char* mask_path,
                               double threshold, int32_t zscore);

/* ---- benchmarking ----------------------------------------------------- */

typedef struct tu_latency_stats {
    int32_t warmup;
    int32_t iterations;
    double mean_ms;
    double median_ms;
    double p95_ms;
} tu_latency_stats;

/* `millis` may be NULL; otherwise it receives `iters` timings. */
TU_API tu_status tu_measure_latency(const tu_model* model, tu_shape input, int32_t warmup, int32_t iters,
                                    tu_latency_stats* stats, double* millis);

typedef struct tu_stage_record {
    int32_t stage;
    int32_t width;
    int64_t params;
    int64_t macs;
    double mdc;
    double val_loss;
    double latency_ms;
} tu_stage_record;

typedef void (*tu_stage_callback)(const tu_stage_record* record, void* user);

typedef struct tu_sweep_config {
    tu_model_config base; /* base_width is replaced per stage */
    tu_train_config train;
    uint64_t init_seed;
    int32_t latency_warmup;
    int32_t latency_iters;
    const char* csv_path; /* may be NULL */
} tu_sweep_config;

/* `widths` ascending; `records` (may be NULL) receives `width_count` entries,
 * stage 1 being the widest model. */
TU_API tu_status tu_stage_sweep(const int32_t* widths, size_t width_count, const tu_dataset* train,
                                const tu_dataset* val, const tu_sweep_config* config,
                                tu_stage_callback on_stage, void* user, tu_stage_record* records);

#ifdef __cplusplus
}
#endif

#endif /* TINYUNET_H */
