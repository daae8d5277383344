#ifndef RJMF_H
#define RJMF_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible call.
 */
typedef enum RjmfStatus {
  RJMF_STATUS_OK = 0,
  RJMF_STATUS_NULL_POINTER = 1,
  RJMF_STATUS_INVALID_UTF8 = 2,
  RJMF_STATUS_PARSE = 3,
  RJMF_STATUS_DUPLICATE_RATING = 4,
  RJMF_STATUS_EMPTY_DATASET = 5,
  RJMF_STATUS_UNDEFINED_METRIC = 6,
  RJMF_STATUS_INVALID_ARGUMENT = 7,
  RJMF_STATUS_INDEX_OUT_OF_RANGE = 8,
  RJMF_STATUS_SINGULAR_SYSTEM = 9,
  RJMF_STATUS_NON_FINITE = 10,
  RJMF_STATUS_IO = 11,
  RJMF_STATUS_PANIC = 12,
} RjmfStatus;

/**
 * Outcome of one annealing chain.
 */
typedef struct RjmfChainResult RjmfChainResult;

/**
 * User and item factor matrices.
 */
typedef struct RjmfModel RjmfModel;

/**
 * A parsed rating set.
 */
typedef struct RjmfRatings RjmfRatings;

/**
 * Sampler settings passed by value.
 */
typedef struct RjmfSamplerParams {
  size_t k_max;
  /**
   * 0 draws the starting dimension uniformly from 1..=k_max.
   */
  size_t initial_k;
  double step_scale;
  /**
   * Non-zero multiplies the within-move step by √T.
   */
  int32_t scale_step_with_temperature;
  double t0;
  double cooling_beta;
  double tmin;
  double lambda1_init;
  double lambda2_init;
  double adam_alpha;
  double adam_beta1;
  double adam_beta2;
  double adam_eps;
  /**
   * Non-zero selects the descent direction for the λ update.
   */
  int32_t eb_descent;
  double freeze_tol;
} RjmfSamplerParams;

/**
 * One iteration of a chain trace.
 */
typedef struct RjmfTraceRecord {
  size_t iteration;
  double temperature;
  size_t k;
  /**
   * 0 birth, 1 death, 2 within.
   */
  int32_t move_kind;
  int32_t accepted;
  double train_loss;
  /**
   * NaN when the chain ran without a test set.
   */
  double test_rmse;
  double lambda1;
  double lambda2;
} RjmfTraceRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *rjmf_last_error(void);

/**
 * Reads a MovieLens file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RjmfStatus rjmf_ratings_load(const char *path, struct RjmfRatings **out_ratings);

/**
 * Parses MovieLens text held in memory.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum RjmfStatus rjmf_ratings_parse(const uint8_t *data,
                                   size_t len,
                                   struct RjmfRatings **out_ratings);

/**
 * Builds a rating set from dense 0-based indices.
 *
 * # Safety
 * `users`, `items` and `values` must each point to `len` readable elements.
 */
enum RjmfStatus rjmf_ratings_from_triples(size_t n_users,
                                          size_t n_items,
                                          const size_t *users,
                                          const size_t *items,
                                          const double *values,
                                          size_t len,
                                          struct RjmfRatings **out_ratings);

/**
 * # Safety
 * `ratings` must be NULL or a pointer obtained from this library.
 */
void rjmf_ratings_free(struct RjmfRatings *ratings);

/**
 * Number of ratings; 0 for NULL.
 *
 * # Safety
 * `ratings` must be NULL or a live handle.
 */
size_t rjmf_ratings_len(const struct RjmfRatings *ratings);

/**
 * # Safety
 * `ratings` must be NULL or a live handle.
 */
size_t rjmf_ratings_n_users(const struct RjmfRatings *ratings);

/**
 * # Safety
 * `ratings` must be NULL or a live handle.
 */
size_t rjmf_ratings_n_items(const struct RjmfRatings *ratings);

/**
 * Seeded uniform train/test partition.
 *
 * # Safety
 * `ratings` must be a live handle; both out pointers must be writable.
 */
enum RjmfStatus rjmf_split(const struct RjmfRatings *ratings,
                           double fraction,
                           uint64_t seed,
                           struct RjmfRatings **out_train,
                           struct RjmfRatings **out_test);

/**
 * Fits ALS with fixed k and λ. An empty `test` may be passed as NULL.
 *
 * # Safety
 * `train` must be a live handle, `test` NULL or a live handle, and
 * `out_model` writable.
 */
enum RjmfStatus rjmf_als_fit(const struct RjmfRatings *train,
                             const struct RjmfRatings *test,
                             double lambda1,
                             double lambda2,
                             size_t k,
                             uint64_t seed,
                             size_t max_iters,
                             double tol,
                             struct RjmfModel **out_model);

/**
 * # Safety
 * `model` must be NULL or a pointer obtained from this library.
 */
void rjmf_model_free(struct RjmfModel *model);

/**
 * Latent dimension; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t rjmf_model_k(const struct RjmfModel *model);

/**
 * Predicted rating for dense indices (user, item).
 *
 * # Safety
 * `model` must be a live handle and `out_value` writable.
 */
enum RjmfStatus rjmf_model_predict(const struct RjmfModel *model,
                                   size_t user,
                                   size_t item,
                                   double *out_value);

/**
 * RMSE of `model` over `ratings`.
 *
 * # Safety
 * Both handles must be live and `out_value` writable.
 */
enum RjmfStatus rjmf_model_rmse(const struct RjmfModel *model,
                                const struct RjmfRatings *ratings,
                                double *out_value);

/**
 * Library defaults for the sampler.
 */
struct RjmfSamplerParams rjmf_sampler_params_default(void);

/**
 * Runs one annealing chain. `test` may be NULL.
 *
 * # Safety
 * `params` and `train` must be valid, `test` NULL or a live handle, and
 * `out_result` writable.
 */
enum RjmfStatus rjmf_run_chain(const struct RjmfSamplerParams *params,
                               const struct RjmfRatings *train,
                               const struct RjmfRatings *test,
                               uint64_t seed,
                               struct RjmfChainResult **out_result);

/**
 * # Safety
 * `result` must be NULL or a pointer obtained from this library.
 */
void rjmf_chain_result_free(struct RjmfChainResult *result);

/**
 * Number of trace records; 0 for NULL.
 *
 * # Safety
 * `result` must be NULL or a live handle.
 */
size_t rjmf_chain_result_len(const struct RjmfChainResult *result);

/**
 * Copies trace record `index` into `out_record`.
 *
 * # Safety
 * `result` must be a live handle and `out_record` writable.
 */
enum RjmfStatus rjmf_chain_result_record(const struct RjmfChainResult *result,
                                         size_t index,
                                         struct RjmfTraceRecord *out_record);

/**
 * Final hyperparameters and the freeze iteration (-1 if never frozen).
 *
 * # Safety
 * `result` must be a live handle; out pointers must be writable.
 */
enum RjmfStatus rjmf_chain_result_hyper(const struct RjmfChainResult *result,
                                        double *out_lambda1,
                                        double *out_lambda2,
                                        int64_t *out_frozen_at);

/**
 * A copy of the lowest-loss state and its loss.
 *
 * # Safety
 * `result` must be a live handle; out pointers must be writable.
 */
enum RjmfStatus rjmf_chain_result_best(const struct RjmfChainResult *result,
                                       struct RjmfModel **out_model,
                                       double *out_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RJMF_H */
