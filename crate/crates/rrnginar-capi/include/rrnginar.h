/* C interface to the rrnginar count time-series library. */

#ifndef RRNGINAR_H
#define RRNGINAR_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every FFI entry point.
 */
typedef enum RrnStatus {
  RrnOk = 0,
  /**
   * A pointer argument was null or an enum value was out of range.
   */
  RrnErrInvalidArg = 1,
  /**
   * JSON or CSV input failed to parse.
   */
  RrnErrParse = 2,
  /**
   * The model or method configuration violates an invariant.
   */
  RrnErrModel = 3,
  /**
   * A numeric routine failed (infeasible parameters, degenerate data).
   */
  RrnErrNumeric = 4,
  RrnErrIo = 5,
  /**
   * An internal panic was caught at the boundary.
   */
  RrnErrPanic = 6,
} RrnStatus;

/**
 * Opaque model document: parameters plus environment chain.
 */
typedef struct RrnModel RrnModel;

/**
 * Opaque simulated trajectory.
 */
typedef struct RrnSeries RrnSeries;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version string; static storage, do not free.
 */
const char *rrn_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread; do not free.
 */
const char *rrn_last_error_message(void);

/**
 * Frees a string returned through an out-pointer.
 *
 * # Safety
 * `ptr` must have been produced by this library and not freed before.
 */
void rrn_string_free(char *ptr);

/**
 * Parses a JSON model document (keys `variant`, `r`, `M`, `A`, `P`, `phi`,
 * `p_vec`, `p_mat`) and validates it.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` must be non-null.
 */
enum RrnStatus rrn_model_from_json(const char *json, struct RrnModel **out);

/**
 * Serializes the model document back to JSON.
 *
 * # Safety
 * `model` must be a live handle from [`rrn_model_from_json`]; `out` non-null.
 */
enum RrnStatus rrn_model_to_json(const struct RrnModel *model, char **out);

/**
 * # Safety
 * `model` must come from [`rrn_model_from_json`] and not be freed twice.
 */
void rrn_model_free(struct RrnModel *model);

/**
 * Simulates `n` steps. `order_rule`: 0 = min, 1 = literal max.
 *
 * # Safety
 * `model` must be a live handle; `out` must be non-null.
 */
enum RrnStatus rrn_simulate(const struct RrnModel *model,
                            size_t n,
                            int32_t order_rule,
                            uint64_t seed,
                            struct RrnSeries **out);

/**
 * # Safety
 * `series` must be a live handle (null returns 0).
 */
size_t rrn_series_len(const struct RrnSeries *series);

/**
 * Copies counts, states, working orders and chosen lags into caller
 * buffers. Any buffer pointer may be null to skip that column; non-null
 * buffers must hold `rrn_series_len` elements.
 *
 * # Safety
 * Non-null buffers must be valid for `rrn_series_len(series)` writes.
 */
enum RrnStatus rrn_series_copy(const struct RrnSeries *series,
                               uint64_t *x_out,
                               uint32_t *z_out,
                               uint32_t *p_out,
                               uint32_t *lag_out);

/**
 * # Safety
 * `series` must come from [`rrn_simulate`] and not be freed twice.
 */
void rrn_series_free(struct RrnSeries *series);

/**
 * Estimates environment states by K-means on the raw values. `states_out`
 * receives `n` labels in `1..=r`.
 *
 * # Safety
 * `x` must hold `n` readable elements and `states_out` `n` writable ones.
 */
enum RrnStatus rrn_states_kmeans(const uint64_t *x,
                                 size_t n,
                                 size_t r,
                                 uint64_t seed,
                                 uint32_t *states_out);

/**
 * Estimates environment states with the transformation-then-cluster
 * method. `renes_json` carries the method parameters (keys `d_p`, `c_m`,
 * `c_a`, `c_p`, `C_m`, `C_a`, `C_p`).
 *
 * # Safety
 * `x` must hold `n` readable elements, `states_out` `n` writable ones, and
 * `renes_json` must be a valid NUL-terminated string.
 */
enum RrnStatus rrn_states_renes(const uint64_t *x,
                                size_t n,
                                const char *renes_json,
                                size_t r,
                                size_t p_max,
                                uint64_t seed,
                                uint32_t *states_out);

/**
 * Fits `(M, A, phi)` by conditional maximum likelihood given states.
 * `p` holds the `r` per-state maximal orders; `variant`: 0 = max, 1 = one.
 * On success `fit_json_out` receives the fit document (model schema plus
 * `loglik`, `rms`, `converged`); free it with [`rrn_string_free`].
 *
 * # Safety
 * `x` and `states` must hold `n` readable elements, `p` must hold `r`
 * readable elements, and `fit_json_out` must be non-null.
 */
enum RrnStatus rrn_cml_fit(const uint64_t *x,
                           const uint32_t *states,
                           size_t n,
                           int32_t variant,
                           const uint32_t *p,
                           size_t r,
                           int32_t order_rule,
                           uint64_t seed,
                           char **fit_json_out);

/**
 * Scores one-step predictions of a fitted model over a series.
 * `kind`: 0 = in-sample conditional mean, 1 = one-step-ahead forecast
 * (previous state propagated). `fit_json` accepts either a fit document or
 * a plain model document.
 *
 * # Safety
 * `x` and `states` must hold `n` readable elements; `fit_json` must be a
 * valid NUL-terminated string; `rms_out` must be non-null.
 */
enum RrnStatus rrn_eval_rms(const uint64_t *x,
                            const uint32_t *states,
                            size_t n,
                            const char *fit_json,
                            int32_t order_rule,
                            int32_t kind,
                            double *rms_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RRNGINAR_H */
