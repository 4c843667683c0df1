/* C interface to the low-shot image prior library.
 *
 * Images cross this boundary as packed float CHW buffers with values in
 * [-1,1]. Measurements live on the [0,1] scale (callers remap before apply;
 * the inversion entry points do it internally). Every call returns a status
 * code; on failure lowshot_last_error() describes what went wrong for the
 * calling thread. Strings returned through a char** must be released with
 * lowshot_string_free.
 */
#ifndef LOWSHOT_H
#define LOWSHOT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define LOWSHOT_API __declspec(dllexport)
#else
#define LOWSHOT_API __attribute__((visibility("default")))
#endif

typedef int32_t lowshot_status;

enum {
    LOWSHOT_OK = 0,
    LOWSHOT_ERR_INVALID_ARGUMENT = 1, /* null pointer, bad buffer length */
    LOWSHOT_ERR_SHAPE = 2,
    LOWSHOT_ERR_CONFIG = 3,
    LOWSHOT_ERR_NUMERIC = 4, /* non-finite value during optimization */
    LOWSHOT_ERR_IO = 5,
    LOWSHOT_ERR_INCOMPATIBLE = 6, /* checkpoint/descriptor mismatch */
    LOWSHOT_ERR_INTERNAL = 7
};

typedef struct lowshot_dataset lowshot_dataset;
typedef struct lowshot_model lowshot_model;
typedef struct lowshot_operator lowshot_operator;
typedef struct lowshot_result lowshot_result;

LOWSHOT_API const char* lowshot_last_error(void);
LOWSHOT_API void lowshot_string_free(char* s);

/* ---- datasets ------------------------------------------------------- */

/* Splits the directory's images by content digest: the first test_count are
 * the test split, the next shot_count the shot split. */
LOWSHOT_API lowshot_status lowshot_dataset_open(const char* dir, int64_t resolution,
                                                int32_t shot_count, int32_t test_count,
                                                lowshot_dataset** out);
LOWSHOT_API void lowshot_dataset_close(lowshot_dataset* ds);
LOWSHOT_API lowshot_status lowshot_dataset_counts(const lowshot_dataset* ds, int32_t* shots,
                                                  int32_t* test);
/* which: 0 = shot split, 1 = test split. out holds 3*R*R floats. */
LOWSHOT_API lowshot_status lowshot_dataset_image(const lowshot_dataset* ds, int32_t which,
                                                 int32_t index, float* out, size_t out_len);
/* Content digest (hex) of the underlying file. */
LOWSHOT_API lowshot_status lowshot_dataset_image_id(const lowshot_dataset* ds, int32_t which,
                                                    int32_t index, char* buf, size_t buf_len);

/* ---- standalone images ---------------------------------------------- */

LOWSHOT_API lowshot_status lowshot_image_load(const char* path, int64_t resolution, float* out,
                                              size_t out_len);
LOWSHOT_API lowshot_status lowshot_image_save_png(const char* path, const float* chw,
                                                  int64_t resolution);
/* PSNR between two [-1,1] CHW buffers, computed on the [0,1] scale. */
LOWSHOT_API lowshot_status lowshot_psnr(const float* a, const float* b, size_t len, double* out);
LOWSHOT_API lowshot_status lowshot_file_digest(const char* path, char* buf, size_t buf_len);

/* ---- models ---------------------------------------------------------- */

/* Joint pretraining on shot_count images of 3*R*R floats each, packed
 * back-to-back. config_json uses the run-config schema (resolution,
 * latent_dim, base_channels, losses[0], pretrain_iterations, ...). */
LOWSHOT_API lowshot_status lowshot_pretrain(const char* config_json, const float* shots,
                                            int32_t shot_count, lowshot_model** out);
LOWSHOT_API lowshot_status lowshot_model_load(const char* path, lowshot_model** out);
LOWSHOT_API lowshot_status lowshot_model_save(const lowshot_model* model, const char* path);
LOWSHOT_API void lowshot_model_close(lowshot_model* model);
/* Descriptor, latent count, and metadata as a JSON document. */
LOWSHOT_API lowshot_status lowshot_model_info(const lowshot_model* model, char** json_out);

/* ---- measurement operators ------------------------------------------ */

LOWSHOT_API lowshot_status lowshot_operator_gaussian(int64_t m, int64_t n, uint64_t seed,
                                                     lowshot_operator** out);
LOWSHOT_API lowshot_status lowshot_operator_luma(int64_t h, int64_t w, lowshot_operator** out);
LOWSHOT_API lowshot_status lowshot_operator_identity(int64_t n, lowshot_operator** out);
LOWSHOT_API void lowshot_operator_close(lowshot_operator* op);
LOWSHOT_API lowshot_status lowshot_operator_info(const lowshot_operator* op, int64_t* m,
                                                 int64_t* n);
/* x: n values on the measurement scale; y: m values. */
LOWSHOT_API lowshot_status lowshot_operator_apply(const lowshot_operator* op, const float* x,
                                                  size_t x_len, float* y, size_t y_len);
/* In-place seeded additive Gaussian noise. */
LOWSHOT_API lowshot_status lowshot_add_noise(float* y, size_t len, double noise_std,
                                             uint64_t seed);

/* ---- inversion ------------------------------------------------------- */

/* Two-stage solve of measurements y under op with a trained model. */
LOWSHOT_API lowshot_status lowshot_invert(const lowshot_model* model, const lowshot_operator* op,
                                          const float* y, size_t y_len, const char* config_json,
                                          lowshot_result** out);
/* Baseline: fresh random weights fit to y alone. ratio picks the iteration
 * schedule for gaussian operators; luma/identity use the largest budget. */
LOWSHOT_API lowshot_status lowshot_invert_untrained(const lowshot_operator* op, const float* y,
                                                    size_t y_len, const char* config_json,
                                                    double ratio, lowshot_result** out);
LOWSHOT_API void lowshot_result_close(lowshot_result* res);
LOWSHOT_API lowshot_status lowshot_result_image(const lowshot_result* res, float* out,
                                                size_t out_len);
LOWSHOT_API lowshot_status lowshot_result_stats(const lowshot_result* res, double* stage1_final,
                                                double* stage2_final, double* measurement_loss);

/* ---- config-driven runs ---------------------------------------------- */

LOWSHOT_API lowshot_status lowshot_run_pretrain(const char* config_json,
                                                char** manifest_json_out);
/* cfg.task selects cs or colorization. finalized becomes 1 once every cell
 * is present and the canonical CSV, summary, and plots are written. */
LOWSHOT_API lowshot_status lowshot_run_sweep(const char* config_json, int64_t* cells_total,
                                             int64_t* cells_completed, int32_t* finalized);
LOWSHOT_API lowshot_status lowshot_run_invert_file(const char* config_json,
                                                   const char* image_path,
                                                   const char* checkpoint_path,
                                                   char** report_json_out);
LOWSHOT_API lowshot_status lowshot_render_plot(const char* csv_path, const char* svg_path);
LOWSHOT_API lowshot_status lowshot_run_gradcheck(const char* config_json,
                                                 char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* LOWSHOT_H */
