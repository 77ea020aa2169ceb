#ifndef BOOSTHD_H
#define BOOSTHD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Encoder nonlinearity.
 */
typedef enum BhdEncoder {
  BHD_ENCODER_COS_SIN = 0,
  BHD_ENCODER_COS = 1,
} BhdEncoder;

/**
 * Result code of every fallible call.
 */
typedef enum BhdStatus {
  BHD_STATUS_OK = 0,
  BHD_STATUS_NULL_POINTER = 1,
  BHD_STATUS_INVALID_ARGUMENT = 2,
  BHD_STATUS_IO = 3,
  BHD_STATUS_FORMAT = 4,
  BHD_STATUS_CHECKSUM = 5,
  BHD_STATUS_VERSION_MISMATCH = 6,
  BHD_STATUS_DATA = 7,
  BHD_STATUS_NUMERIC = 8,
  BHD_STATUS_PANIC = 9,
} BhdStatus;

/**
 * Opaque trained ensemble.
 */
typedef struct BhdModel BhdModel;

/**
 * Training parameters; start from `bhd_train_config_default`.
 */
typedef struct BhdTrainConfig {
  size_t d_total;
  size_t n_learners;
  size_t epochs;
  double lr;
  double alpha_cap;
  uint64_t seed;
  uint64_t shuffle_seed;
  enum BhdEncoder encoder;
} BhdTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread (empty if none). The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bhd_last_error_message(void);

/**
 * Library defaults: 10 learners over 1000 dimensions, 20 epochs, lr 0.035.
 */
struct BhdTrainConfig bhd_train_config_default(void);

/**
 * Train on a row-major `n_rows x n_cols` feature matrix with labels in
 * `0..n_classes`. On success `*out` owns a new model.
 *
 * # Safety
 * `x` must point to `n_rows * n_cols` doubles, `labels` to `n_rows`
 * values, `cfg` to a valid config and `out` to writable storage.
 */
enum BhdStatus bhd_model_train(const double *x,
                               size_t n_rows,
                               size_t n_cols,
                               const uint32_t *labels,
                               size_t n_classes,
                               const struct BhdTrainConfig *cfg,
                               struct BhdModel **out);

/**
 * Load a model file. On success `*out` owns a new model.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum BhdStatus bhd_model_load(const char *path, struct BhdModel **out);

/**
 * Write a model file atomically.
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum BhdStatus bhd_model_save(const struct BhdModel *model, const char *path);

/**
 * Release a model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void bhd_model_free(struct BhdModel *model);

/**
 * Predict the label of one feature vector of length `n_features`.
 *
 * # Safety
 * `x` must point to `n_features` doubles and `out_label` be writable.
 */
enum BhdStatus bhd_model_predict(const struct BhdModel *model,
                                 const double *x,
                                 size_t n_features,
                                 uint32_t *out_label);

/**
 * Predict labels of a row-major `n_rows x n_cols` matrix into
 * `out_labels[0..n_rows]`.
 *
 * # Safety
 * `x` must point to `n_rows * n_cols` doubles and `out_labels` to
 * `n_rows` writable values.
 */
enum BhdStatus bhd_model_predict_batch(const struct BhdModel *model,
                                       const double *x,
                                       size_t n_rows,
                                       size_t n_cols,
                                       uint32_t *out_labels);

/**
 * Number of classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bhd_model_n_classes(const struct BhdModel *model);

/**
 * Input feature count, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bhd_model_n_features(const struct BhdModel *model);

/**
 * Total hypervector width, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bhd_model_d_total(const struct BhdModel *model);

/**
 * Number of weak learners, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t bhd_model_n_learners(const struct BhdModel *model);

/**
 * Copy the learner weights into `out[0..len]`; `len` must equal the
 * learner count.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum BhdStatus bhd_model_alphas(const struct BhdModel *model, double *out, size_t len);

/**
 * Faulty copy of `model`: every stored class-hypervector bit flips with
 * probability `p_b`, keyed by `(seed, trial)`. The source is unchanged.
 *
 * # Safety
 * `out` must be writable; `out_flipped` may be null.
 */
enum BhdStatus bhd_model_bitflip(const struct BhdModel *model,
                                 double p_b,
                                 uint64_t seed,
                                 uint64_t trial,
                                 struct BhdModel **out,
                                 uint64_t *out_flipped);

/**
 * Median absolute deviation of `values[0..len]`.
 *
 * # Safety
 * `values` must point to `len` doubles and `out` be writable.
 */
enum BhdStatus bhd_mad(const double *values, size_t len, double *out);

/**
 * Cosine similarity of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must point to `len` doubles and `out` be writable.
 */
enum BhdStatus bhd_cosine(const double *a, const double *b, size_t len, double *out);

/**
 * Marchenko-Pastur bulk edges for aspect ratio `q` and entry scale `sigma`.
 *
 * # Safety
 * `out_min` and `out_max` must be writable.
 */
enum BhdStatus bhd_mp_bounds(double q, double sigma, double *out_min, double *out_max);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOOSTHD_H */
