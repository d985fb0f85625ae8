#ifndef CAUSENET_H
#define CAUSENET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum CnStatus {
  CN_OK = 0,
  CN_NULL_POINTER = 1,
  CN_INVALID_ARGUMENT = 2,
  CN_INPUT_ERROR = 3,
  CN_MISSING_ARTIFACT = 4,
  CN_NUMERICAL = 5,
  CN_INTERNAL = 6,
  CN_PANIC = 7,
} CnStatus;

/**
 * Trained causality detector.
 */
typedef struct CnCausalityDetector CnCausalityDetector;

/**
 * Fitted Gaussian-process model.
 */
typedef struct CnGpModel CnGpModel;

/**
 * Trained lag detector.
 */
typedef struct CnLagDetector CnLagDetector;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; empty after a
 * success. Valid until the next call into the library on this thread.
 */
const char *cn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cn_version(void);

/**
 * `ln(1 + hours)`.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum CnStatus cn_log_time(double hours, double *out);

/**
 * Fits a GP to `n` observations in log time. A `noise_variance` of zero or
 * less requests the maximum-likelihood noise estimate.
 *
 * # Safety
 * `log_times` and `values` must point to `n` doubles; `out` must be valid.
 */
enum CnStatus cn_gp_fit(const double *log_times,
                        const double *values,
                        size_t n,
                        double signal_variance,
                        double length_scale,
                        double noise_variance,
                        struct CnGpModel **out);

/**
 * Posterior mean and latent variance at log time `t`.
 *
 * # Safety
 * `model` must come from `cn_gp_fit`; `mean` and `variance` must be valid.
 */
enum CnStatus cn_gp_predict(const struct CnGpModel *model,
                            double t,
                            double *mean,
                            double *variance);

/**
 * Fitted noise variance.
 *
 * # Safety
 * `model` must come from `cn_gp_fit`; `out` must be valid.
 */
enum CnStatus cn_gp_noise_variance(const struct CnGpModel *model, double *out);

/**
 * Log marginal likelihood of the centered training data.
 *
 * # Safety
 * `model` must come from `cn_gp_fit`; `out` must be valid.
 */
enum CnStatus cn_gp_log_marginal_likelihood(const struct CnGpModel *model, double *out);

/**
 * Releases a GP model. Null is ignored.
 *
 * # Safety
 * `model` must come from `cn_gp_fit` and not be used afterwards.
 */
void cn_gp_free(struct CnGpModel *model);

/**
 * Causality detector with freshly initialized weights.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CnStatus cn_causality_new(size_t window,
                               size_t conv_window,
                               size_t channels,
                               uint64_t seed,
                               struct CnCausalityDetector **out);

/**
 * Loads a causality detector saved as model JSON.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum CnStatus cn_causality_load(const char *path, struct CnCausalityDetector **out);

/**
 * Input window length; 0 for a null handle.
 *
 * # Safety
 * `detector` must be null or a live handle.
 */
size_t cn_causality_window(const struct CnCausalityDetector *detector);

/**
 * Probability that `a` and `b` are causally related. Symmetric in its inputs.
 *
 * # Safety
 * `a` and `b` must point to `len` doubles; `out` must be valid.
 */
enum CnStatus cn_causality_predict(const struct CnCausalityDetector *detector,
                                   const double *a,
                                   const double *b,
                                   size_t len,
                                   double *out);

/**
 * Releases a causality detector. Null is ignored.
 *
 * # Safety
 * `detector` must come from this library and not be used afterwards.
 */
void cn_causality_free(struct CnCausalityDetector *detector);

/**
 * Lag detector with freshly initialized weights.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum CnStatus cn_lag_new(size_t window,
                         size_t conv_window,
                         size_t channels,
                         uint64_t seed,
                         struct CnLagDetector **out);

/**
 * Loads a lag detector saved as model JSON.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum CnStatus cn_lag_load(const char *path, struct CnLagDetector **out);

/**
 * Input window length; 0 for a null handle.
 *
 * # Safety
 * `detector` must be null or a live handle.
 */
size_t cn_lag_window(const struct CnLagDetector *detector);

/**
 * Signed lag score: positive when `a` leads `b`. Antisymmetric in its inputs.
 *
 * # Safety
 * `a` and `b` must point to `len` doubles; `out` must be valid.
 */
enum CnStatus cn_lag_predict(const struct CnLagDetector *detector,
                             const double *a,
                             const double *b,
                             size_t len,
                             double *out);

/**
 * Releases a lag detector. Null is ignored.
 *
 * # Safety
 * `detector` must come from this library and not be used afterwards.
 */
void cn_lag_free(struct CnLagDetector *detector);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSENET_H */
