#ifndef LATTICE_SAR_H
#define LATTICE_SAR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_INVALID_ARGUMENT = 1,
  LS_STATUS_NULL_POINTER = 2,
  LS_STATUS_DATA = 3,
  LS_STATUS_NUMERICAL = 4,
  LS_STATUS_CONVERGENCE = 5,
  LS_STATUS_PANIC = 6,
} LsStatus;

/**
 * Simulated or loaded lattice dataset.
 */
typedef struct LsDataset LsDataset;

/**
 * Result of a two-step lasso fit.
 */
typedef struct LsFit LsFit;

/**
 * Estimator settings. Obtain defaults from [`ls_fit_options_default`].
 */
typedef struct LsFitOptions {
  /**
   * Template size: 8, 24, 48, ...
   */
  size_t m;
  /**
   * First-step replications; 0 selects the largest admissible count.
   */
  size_t r1;
  /**
   * Second-step replications; 0 selects the default.
   */
  size_t r2;
  double gamma;
  size_t folds;
  uint64_t seed;
  /**
   * Nonzero to fit an intercept.
   */
  int32_t intercept;
} LsFitOptions;

/**
 * Maximum-likelihood estimates; standard errors are NaN when unavailable.
 */
typedef struct LsMlResult {
  double c_hat;
  double intercept;
  double sigma2_hat;
  double loglik;
  double se_c;
  double c_lower;
  double c_upper;
} LsMlResult;

/**
 * Support recovery of a weight estimate; rates are NaN when undefined.
 */
typedef struct LsWeightEval {
  double mae;
  double specificity;
  double sensitivity;
} LsWeightEval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *ls_last_error(void);

/**
 * Simulates a `side x side` dataset from the named scheme (`queen`, `rook`
 * or `ese`) with `k` standard normal regressors and all coefficients one.
 *
 * # Safety
 * `scheme` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_dataset_simulate(const char *scheme,
                                  double c,
                                  size_t side,
                                  size_t k,
                                  double sigma,
                                  uint64_t seed,
                                  struct LsDataset **out);

/**
 * Dataset from row-major arrays: `y` has `nrows * ncols` values and `x` has
 * `nrows * ncols` rows of `k` regressors, sites ordered row by row.
 *
 * # Safety
 * `y` and `x` must point to arrays of the stated sizes; `out` must be valid.
 */
enum LsStatus ls_dataset_new(size_t nrows,
                             size_t ncols,
                             size_t k,
                             const double *y,
                             const double *x,
                             struct LsDataset **out);

/**
 * Reads a grid CSV file (`row,col,y,x1..xk`).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LsStatus ls_dataset_read_csv(const char *path, struct LsDataset **out);

/**
 * Number of sites, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t ls_dataset_n(const struct LsDataset *ds);

/**
 * Number of regressors, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t ls_dataset_k(const struct LsDataset *ds);

/**
 * Copies the response into `buf` (capacity `len`).
 *
 * # Safety
 * `ds` must be a live handle and `buf` hold `len` values.
 */
enum LsStatus ls_dataset_y(const struct LsDataset *ds, double *buf, size_t len);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void ls_dataset_free(struct LsDataset *ds);

struct LsFitOptions ls_fit_options_default(void);

/**
 * Two-step adaptive lasso with estimated weights. `options` may be null for defaults.
 *
 * # Safety
 * Pointers must be null (where allowed) or valid.
 */
enum LsStatus ls_two_step_fit(const struct LsDataset *ds,
                              const struct LsFitOptions *options,
                              struct LsFit **out);

/**
 * Two-step lasso with a fixed contiguity pattern (`queen`, `rook` or `ese`);
 * only the strength is estimated.
 *
 * # Safety
 * Pointers must be null (where allowed) or valid; `scheme` NUL-terminated.
 */
enum LsStatus ls_fixed_fit(const struct LsDataset *ds,
                           const char *scheme,
                           const struct LsFitOptions *options,
                           struct LsFit **out);

/**
 * Template size `m` of the fit, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t ls_fit_m(const struct LsFit *fit);

/**
 * Number of regression coefficients, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t ls_fit_k(const struct LsFit *fit);

/**
 * Copies the `m` template weights into `buf`.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` values.
 */
enum LsStatus ls_fit_weights(const struct LsFit *fit, double *buf, size_t len);

/**
 * Copies the `k` regression coefficients into `buf`.
 *
 * # Safety
 * `fit` must be a live handle and `buf` hold `len` values.
 */
enum LsStatus ls_fit_beta(const struct LsFit *fit, double *buf, size_t len);

/**
 * Scalar estimates: dependence strength, intercept and the selected penalties.
 * Any output pointer may be null.
 *
 * # Safety
 * `fit` must be a live handle; outputs null or valid.
 */
enum LsStatus ls_fit_scalars(const struct LsFit *fit,
                             double *c_hat,
                             double *intercept,
                             double *lambda1,
                             double *lambda2);

/**
 * In-sample RMSE of the fit over sites with a complete prediction window.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum LsStatus ls_fit_rmse(const struct LsFit *fit, const struct LsDataset *ds, double *out);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void ls_fit_free(struct LsFit *fit);

/**
 * Maximum-likelihood fit with the row-standardised contiguity matrix of the
 * named scheme. Coefficients go to `beta` (capacity `beta_len`, at least k).
 *
 * # Safety
 * Handles and outputs must be valid; `scheme` NUL-terminated.
 */
enum LsStatus ls_ml_fit(const struct LsDataset *ds,
                        const char *scheme,
                        int32_t intercept,
                        struct LsMlResult *out,
                        double *beta,
                        size_t beta_len);

/**
 * Mean absolute difference of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must hold `len` values; `out` must be valid.
 */
enum LsStatus ls_mae(const double *a, const double *b, size_t len, double *out);

/**
 * Root mean squared difference of two vectors of length `len`.
 *
 * # Safety
 * `a` and `b` must hold `len` values; `out` must be valid.
 */
enum LsStatus ls_rmse(const double *a, const double *b, size_t len, double *out);

/**
 * MAE, specificity and sensitivity of `estimate` against `truth`.
 *
 * # Safety
 * `estimate` and `truth` must hold `len` values; `out` must be valid.
 */
enum LsStatus ls_support_stats(const double *estimate,
                               const double *truth,
                               size_t len,
                               double zero_tol,
                               struct LsWeightEval *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATTICE_SAR_H */
