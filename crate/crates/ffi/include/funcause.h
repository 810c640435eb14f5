#ifndef FUNCAUSE_H
#define FUNCAUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_ARGUMENT = 2,
  FC_STATUS_IO = 3,
  FC_STATUS_SCHEMA = 4,
  FC_STATUS_DOMAIN = 5,
  FC_STATUS_NUMERICAL = 6,
  FC_STATUS_NOT_BINARY = 7,
  FC_STATUS_PANIC = 8,
} FcStatus;

/**
 * Regime of a confidence interval for the effect norm.
 */
typedef enum {
  FC_REGIME_NONZERO_NORM = 0,
  FC_REGIME_ZERO_NORM = 1,
} FcRegime;

/**
 * Opaque dataset handle.
 */
typedef struct FcDataset FcDataset;

/**
 * Opaque effect estimate handle.
 */
typedef struct FcEffect FcEffect;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none.
 */
const char *fc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

/**
 * Loads a dataset from a CSV file (or JSON, by extension).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
FcStatus fc_dataset_load(const char *path, FcDataset **out);

/**
 * Writes a dataset to a CSV file (or JSON, by extension).
 *
 * # Safety
 * `ds` must be a live handle and `path` a NUL-terminated string.
 */
FcStatus fc_dataset_save(const FcDataset *ds, const char *path);

/**
 * Builds a dataset from row-major arrays: `outcomes` is `n × t` on a
 * uniform grid over [0, 1], `covariates` is `n × d` (may be null when
 * `d == 0`). Sample ids are `0..n`.
 *
 * # Safety
 * Each pointer must reference at least the stated number of doubles.
 */
FcStatus fc_dataset_from_arrays(size_t n,
                                size_t t,
                                size_t d,
                                const double *treatments,
                                const double *covariates,
                                const double *outcomes,
                                FcDataset **out);

/**
 * Simulates a dataset from a named scenario with default parameters.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string and `out` a valid pointer.
 */
FcStatus fc_dataset_simulate(const char *scenario,
                             size_t n,
                             size_t t,
                             uint64_t seed,
                             uint64_t replicate,
                             FcDataset **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t fc_dataset_len(const FcDataset *ds);

/**
 * Number of outcome grid points, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t fc_dataset_grid_len(const FcDataset *ds);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void fc_dataset_free(FcDataset *ds);

/**
 * Estimates the dynamic treatment effect with a named estimator
 * (`ipw`, `dr`, `frechet-euclid`, `frechet-fr`, `kernel`,
 * `operator-kernel`, `srvf-operator-kernel`, `iterative-srvf`).
 * `lambda > 0` fixes the ridge penalty; otherwise it is tuned on a holdout.
 *
 * # Safety
 * `ds` must be a live handle, `estimator` a NUL-terminated string and
 * `out` a valid pointer.
 */
FcStatus fc_estimate(const FcDataset *ds, const char *estimator, double lambda, FcEffect **out);

/**
 * Number of grid points of the effect curve, or 0 for a null handle.
 *
 * # Safety
 * `eff` must be null or a live handle.
 */
size_t fc_effect_len(const FcEffect *eff);

/**
 * Scalar effect under the estimator's metric, NaN for a null handle.
 *
 * # Safety
 * `eff` must be null or a live handle.
 */
double fc_effect_norm(const FcEffect *eff);

/**
 * Copies the effect curve Δ(t) into `buf`, which must hold `len` doubles
 * with `len == fc_effect_len(eff)`.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
FcStatus fc_effect_delta(const FcEffect *eff, double *buf, size_t len);

/**
 * Copies the grid points of the effect curve into `buf`.
 *
 * # Safety
 * `buf` must be valid for `len` writes.
 */
FcStatus fc_effect_grid(const FcEffect *eff, double *buf, size_t len);

/**
 * Confidence interval at `level` for the Euclidean norm of the effect
 * curve of `eff`, using the treatment arms of `ds`.
 *
 * # Safety
 * Handles must be live and the output pointers valid.
 */
FcStatus fc_effect_ci(const FcDataset *ds,
                      const FcEffect *eff,
                      double level,
                      double *lower,
                      double *upper,
                      FcRegime *regime);

/**
 * Releases an effect estimate. Null is ignored.
 *
 * # Safety
 * `eff` must be null or a handle not yet freed.
 */
void fc_effect_free(FcEffect *eff);

/**
 * Welch two-sample t-test with a two-sided p-value.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` doubles; outputs must be valid.
 */
FcStatus fc_welch_t_test(const double *a,
                         size_t na,
                         const double *b,
                         size_t nb,
                         double *t,
                         double *df,
                         double *p);

/**
 * Treatment of sample `i` (diagnostic accessor), NaN when out of range.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
double fc_dataset_treatment(const FcDataset *ds, size_t i);

/**
 * Nonzero when every treatment is 0 or 1.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
int fc_dataset_is_binary(const FcDataset *ds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FUNCAUSE_H */
