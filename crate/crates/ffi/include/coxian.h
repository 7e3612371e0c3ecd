#ifndef COXIAN_H
#define COXIAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a call. Values 2 to 7 mirror the library's error codes.
 */
typedef enum CoxianStatus {
  COXIAN_STATUS_OK = 0,
  COXIAN_STATUS_NULL_POINTER = 1,
  COXIAN_STATUS_INVALID_PARAMS = 2,
  COXIAN_STATUS_NUMERIC = 3,
  COXIAN_STATUS_DATA = 4,
  COXIAN_STATUS_INGEST = 5,
  COXIAN_STATUS_CONFIG = 6,
  COXIAN_STATUS_IO = 7,
  /**
   * Caller buffer too small; the required length was written.
   */
  COXIAN_STATUS_BUFFER_TOO_SMALL = 8,
  COXIAN_STATUS_PANIC = 9,
} CoxianStatus;

/**
 * Maximum-likelihood fit.
 */
typedef struct CoxianFit CoxianFit;

/**
 * Single-exit Coxian in mixture form.
 */
typedef struct CoxianMixture CoxianMixture;

/**
 * Two-exit Coxian in mixture form.
 */
typedef struct CoxianTwoExit CoxianTwoExit;

/**
 * Fitting options.
 */
typedef struct CoxianFitOptions {
  size_t n_starts;
  size_t max_iter;
  double rel_tol;
  uint64_t seed;
  /**
   * Nonzero to compute standard errors.
   */
  int32_t std_errors;
} CoxianFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *coxian_last_error(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void coxian_string_free(char *s);

/**
 * Builds a model from rates `theta[n]` and absorption probabilities `pi[n]`.
 *
 * # Safety
 * `theta` and `pi` must hold `n` values; `out` must be writable.
 */
enum CoxianStatus coxian_mixture_new(const double *theta,
                                     const double *pi,
                                     size_t n,
                                     struct CoxianMixture **out);

/**
 * Builds a model from progression rates `lambda[n - 1]` and exit rates `mu[n]`.
 *
 * # Safety
 * `lambda` must hold `n - 1` values and `mu` `n`; `out` must be writable.
 */
enum CoxianStatus coxian_mixture_from_rates(const double *lambda,
                                            const double *mu,
                                            size_t n,
                                            struct CoxianMixture **out);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void coxian_mixture_free(struct CoxianMixture *m);

/**
 * Number of phases, or 0 for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
size_t coxian_mixture_phases(const struct CoxianMixture *m);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CoxianStatus coxian_mixture_density(const struct CoxianMixture *m, double t, double *out);

/**
 * Log density; `-inf` where the density is zero.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CoxianStatus coxian_mixture_log_density(const struct CoxianMixture *m, double t, double *out);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CoxianStatus coxian_mixture_survival(const struct CoxianMixture *m, double t, double *out);

/**
 * Density through the matrix exponential, for cross-checks.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CoxianStatus coxian_mixture_matrix_density(const struct CoxianMixture *m,
                                                double t,
                                                double *out);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CoxianStatus coxian_mixture_mean(const struct CoxianMixture *m, double *out);

/**
 * Rate form: `lambda[n - 1]` and `mu[n]`, both buffers of capacity `cap`.
 *
 * # Safety
 * `m` must be a live handle; buffers must hold `cap` values.
 */
enum CoxianStatus coxian_mixture_rates(const struct CoxianMixture *m,
                                       double *lambda,
                                       double *mu,
                                       size_t cap);

/**
 * # Safety
 * `theta`, `pi1` and `pi2` must hold `n` values; `out` must be writable.
 */
enum CoxianStatus coxian_two_exit_new(const double *theta,
                                      const double *pi1,
                                      const double *pi2,
                                      size_t n,
                                      struct CoxianTwoExit **out);

/**
 * # Safety
 * `m` must come from this library and not be freed twice.
 */
void coxian_two_exit_free(struct CoxianTwoExit *m);

/**
 * Sub-densities of leaving through exit 1 and exit 2 at `t`.
 *
 * # Safety
 * `m` must be a live handle; `f1` and `f2` writable.
 */
enum CoxianStatus coxian_two_exit_density(const struct CoxianTwoExit *m,
                                          double t,
                                          double *f1,
                                          double *f2);

/**
 * Probability of leaving through exit 1, or NaN for a null handle.
 *
 * # Safety
 * `m` must be null or a live handle.
 */
double coxian_two_exit_probability(const struct CoxianTwoExit *m);

/**
 * Library defaults for [`CoxianFitOptions`].
 */
struct CoxianFitOptions coxian_fit_options_default(void);

/**
 * Fits `phases` phases to durations `t[len]`. When `exited` is non-null it
 * holds one flag per record (nonzero: left through exit 1) and a two-exit
 * model is fitted. A null `options` uses the defaults.
 *
 * # Safety
 * `t` (and `exited` when non-null) must hold `len` values; `options` must be
 * null or valid; `out` must be writable.
 */
enum CoxianStatus coxian_fit(const double *t,
                             const uint8_t *exited,
                             size_t len,
                             size_t phases,
                             const struct CoxianFitOptions *options,
                             struct CoxianFit **out);

/**
 * # Safety
 * `f` must come from this library and not be freed twice.
 */
void coxian_fit_free(struct CoxianFit *f);

/**
 * Maximized log-likelihood, or NaN for a null handle.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
double coxian_fit_loglik(const struct CoxianFit *f);

/**
 * # Safety
 * `f` must be null or a live handle.
 */
double coxian_fit_bic(const struct CoxianFit *f);

/**
 * # Safety
 * `f` must be null or a live handle.
 */
double coxian_fit_aic(const struct CoxianFit *f);

/**
 * Starts that agree with the best optimum, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t coxian_fit_agreeing_starts(const struct CoxianFit *f);

/**
 * Fitted rates into `out[..cap]`; `len` receives the phase count.
 *
 * # Safety
 * `f` must be a live handle; `out` must hold `cap` values; `len` writable or null.
 */
enum CoxianStatus coxian_fit_theta(const struct CoxianFit *f, double *out, size_t cap, size_t *len);

/**
 * Exit-1 absorption probabilities into `out[..cap]`.
 *
 * # Safety
 * As [`coxian_fit_theta`].
 */
enum CoxianStatus coxian_fit_pi(const struct CoxianFit *f, double *out, size_t cap, size_t *len);

/**
 * Exit-2 absorption probabilities; all zero for a single-exit fit.
 *
 * # Safety
 * As [`coxian_fit_theta`].
 */
enum CoxianStatus coxian_fit_pi2(const struct CoxianFit *f, double *out, size_t cap, size_t *len);

/**
 * The full result as JSON; free with [`coxian_string_free`].
 *
 * # Safety
 * `f` must be a live handle and `out` writable.
 */
enum CoxianStatus coxian_fit_to_json(const struct CoxianFit *f, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COXIAN_H */
