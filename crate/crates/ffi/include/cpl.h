#ifndef CPL_H
#define CPL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CplStatus {
  CPL_STATUS_OK = 0,
  CPL_STATUS_NULL_POINTER = 1,
  CPL_STATUS_INVALID_ARGUMENT = 2,
  CPL_STATUS_SHAPE_MISMATCH = 3,
  CPL_STATUS_IO = 4,
  CPL_STATUS_FORMAT = 5,
  CPL_STATUS_CONFIG = 6,
  CPL_STATUS_RUNTIME = 7,
  CPL_STATUS_PANIC = 8,
} CplStatus;

typedef enum CplWorld {
  CPL_WORLD_ULTRA_FEEDBACK = 0,
  CPL_WORLD_CONFOUNDED = 1,
} CplWorld;

typedef enum CplVariant {
  CPL_VARIANT_BASE = 0,
  CPL_VARIANT_MULTIHEAD = 1,
  CPL_VARIANT_ADVERSARIAL = 2,
} CplVariant;

/**
 * Evaluation slice; `value` is the objective or prompt type for the last two.
 */
typedef enum CplSliceKind {
  CPL_SLICE_KIND_ALL = 0,
  CPL_SLICE_KIND_CONSISTENT = 1,
  CPL_SLICE_KIND_INCONSISTENT = 2,
  CPL_SLICE_KIND_OBJECTIVE = 3,
  CPL_SLICE_KIND_PROMPT_TYPE = 4,
} CplSliceKind;

/**
 * Opaque dataset handle.
 */
typedef struct CplDataset CplDataset;

/**
 * Opaque model handle.
 */
typedef struct CplModel CplModel;

typedef struct CplTrainOptions {
  enum CplVariant variant;
  /**
   * Gradient reversal strength; used by the adversarial variant.
   */
  double lambda;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  uint64_t seed;
} CplTrainOptions;

typedef struct CplAccuracy {
  double mean;
  double stderr;
  size_t n;
} CplAccuracy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * success. Valid until the next `cpl_` call on the same thread.
 */
const char *cpl_last_error(void);

/**
 * Library version as a static string.
 */
const char *cpl_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from a `cpl_` function and not be freed twice.
 */
void cpl_string_free(char *s);

/**
 * Probability that the response with reward `r` beats the one with `r_prime`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CplStatus cpl_pref_prob(double r, double r_prime, double *out);

/**
 * Probability that two standard normals with correlation `rho` differ in sign.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CplStatus cpl_opposite_sign_probability(double rho, double *out);

/**
 * Maximum-likelihood objective weight from `n` reward-difference pairs
 * (`deltas` holds `2n` values, row-major) and their labels.
 *
 * # Safety
 * `deltas` must hold `2n` doubles and `labels` `n` bytes.
 */
enum CplStatus cpl_fit_alpha(const double *deltas, const uint8_t *labels, size_t n, double *out);

/**
 * Samples `n` comparisons. `rho` is the latent correlation for the
 * ultrafeedback world and the confounding strength for the confounded one;
 * `alpha` is ignored by the latter.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CplStatus cpl_dataset_generate(enum CplWorld world,
                                    double rho,
                                    double alpha,
                                    size_t n,
                                    uint64_t seed,
                                    uint64_t map_seed,
                                    struct CplDataset **out);

/**
 * Reads a JSONL dataset.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum CplStatus cpl_dataset_load(const char *path, struct CplDataset **out);

/**
 * Writes a dataset as JSONL.
 *
 * # Safety
 * `dataset` must be a live handle and `path` a NUL-terminated string.
 */
enum CplStatus cpl_dataset_save(const struct CplDataset *dataset, const char *path);

/**
 * # Safety
 * `dataset` must be a live handle and `out` valid for writes.
 */
enum CplStatus cpl_dataset_len(const struct CplDataset *dataset, size_t *out);

/**
 * Embedding dimension of the responses.
 *
 * # Safety
 * `dataset` must be a live handle and `out` valid for writes.
 */
enum CplStatus cpl_dataset_dim(const struct CplDataset *dataset, size_t *out);

/**
 * # Safety
 * `dataset` must come from this library and not be used afterwards.
 */
void cpl_dataset_free(struct CplDataset *dataset);

/**
 * Untrained desk-sized model with weights drawn from `seed`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum CplStatus cpl_model_new(enum CplVariant variant,
                             size_t input_dim,
                             double lambda,
                             uint64_t seed,
                             struct CplModel **out);

/**
 * Trains a desk-sized model and keeps the epoch with the best validation
 * accuracy.
 *
 * # Safety
 * Dataset handles must be live; `options` and `out` must be valid.
 */
enum CplStatus cpl_model_train(const struct CplDataset *train,
                               const struct CplDataset *validation,
                               const struct CplTrainOptions *options,
                               struct CplModel **out);

/**
 * Reads a checkpoint and its JSON sidecar.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum CplStatus cpl_model_load(const char *path, struct CplModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum CplStatus cpl_model_save(const struct CplModel *model, const char *path);

/**
 * Reward of one response embedding (`dim` doubles) under objective `c`.
 *
 * # Safety
 * `model` must be live, `e` must hold `dim` doubles, `out` valid for writes.
 */
enum CplStatus cpl_model_reward(const struct CplModel *model,
                                const double *e,
                                size_t dim,
                                uint8_t c,
                                double *out);

/**
 * Pairwise accuracy on one slice of `dataset`.
 *
 * # Safety
 * Handles must be live and `out` valid for writes.
 */
enum CplStatus cpl_model_accuracy(const struct CplModel *model,
                                  const struct CplDataset *dataset,
                                  enum CplSliceKind slice,
                                  uint8_t value,
                                  struct CplAccuracy *out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void cpl_model_free(struct CplModel *model);

/**
 * Checks a TOML study config. `report` (optional) receives the rendered
 * findings; free it with `cpl_string_free`. Returns `CPL_STATUS_CONFIG`
 * when the config has errors.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `report` may be null.
 */
enum CplStatus cpl_config_validate(const char *toml, char **report);

/**
 * Runs a TOML study config into `out_dir` with `jobs` workers (0 = one per
 * core). `manifest` (optional) receives the manifest JSON.
 *
 * # Safety
 * `toml` and `out_dir` must be NUL-terminated strings; `manifest` may be null.
 */
enum CplStatus cpl_config_run(const char *toml, const char *out_dir, size_t jobs, char **manifest);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPL_H */
