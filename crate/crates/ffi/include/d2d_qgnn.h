#ifndef D2D_QGNN_H
#define D2D_QGNN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum D2dStatus {
  D2D_STATUS_OK = 0,
  D2D_STATUS_NULL_POINTER = 1,
  D2D_STATUS_INVALID_ARGUMENT = 2,
  D2D_STATUS_DIMENSION_MISMATCH = 3,
  D2D_STATUS_INFEASIBLE_POWER = 4,
  D2D_STATUS_FORMAT = 5,
  D2D_STATUS_IO = 6,
  D2D_STATUS_RUNTIME = 7,
  D2D_STATUS_PANIC = 8,
} D2dStatus;

/**
 * Opaque channel realization.
 */
typedef struct D2dChannel D2dChannel;

/**
 * Opaque trained model with the feature normalization it was trained under.
 */
typedef struct D2dModel D2dModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *d2d_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *d2d_version(void);

/**
 * Draws a random deployment and its channels. `fading` is 1 for Rayleigh, 0 for none.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum D2dStatus d2d_channel_generate(size_t pairs,
                                    double side,
                                    double d_min,
                                    double d_max,
                                    double pathloss_exponent,
                                    double sigma2,
                                    double p_max,
                                    int32_t fading,
                                    uint64_t seed,
                                    struct D2dChannel **out);

/**
 * Builds a channel from row-major complex gains: entry `k * pairs + m` is the gain
 * from transmitter `k` to receiver `m`. `alpha` may be null for unit weights.
 *
 * # Safety
 * `re` and `im` must point to `pairs * pairs` doubles, `alpha` (if non-null) to
 * `pairs` doubles, and `out` to storage for one handle.
 */
enum D2dStatus d2d_channel_from_gains(size_t pairs,
                                      const double *re,
                                      const double *im,
                                      double sigma2,
                                      const double *alpha,
                                      double p_max,
                                      struct D2dChannel **out);

/**
 * Number of transmitter-receiver pairs, or 0 for a null handle.
 *
 * # Safety
 * `ch` must be null or a live handle from this library.
 */
size_t d2d_channel_pairs(const struct D2dChannel *ch);

/**
 * Releases a channel handle. Null is a no-op.
 *
 * # Safety
 * `ch` must be null or a handle not yet freed.
 */
void d2d_channel_free(struct D2dChannel *ch);

/**
 * Per-pair SINR for amplitudes `p` (length `len`) into `out` (length `len`).
 *
 * # Safety
 * `ch` must be a live handle; `p` and `out` must hold `len` doubles.
 */
enum D2dStatus d2d_sinr(const struct D2dChannel *ch, const double *p, size_t len, double *out);

/**
 * Weighted sum rate in bps/Hz for amplitudes `p`.
 *
 * # Safety
 * `ch` must be a live handle, `p` must hold `len` doubles and `out` one double.
 */
enum D2dStatus d2d_sum_rate(const struct D2dChannel *ch, const double *p, size_t len, double *out);

/**
 * Runs WMMSE from full power. Writes amplitudes to `out_p` (length `len`) and, if
 * `out_rate` is non-null, the weighted sum rate of the returned allocation.
 *
 * # Safety
 * `ch` must be a live handle, `out_p` must hold `len` doubles, and `out_rate` must be
 * null or point to one double.
 */
enum D2dStatus d2d_wmmse(const struct D2dChannel *ch,
                         size_t max_iter,
                         double tol,
                         double *out_p,
                         size_t len,
                         double *out_rate);

/**
 * Loads a JSON checkpoint written by `d2d-qgnn train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` must point to storage for one
 * handle.
 */
enum D2dStatus d2d_model_load(const char *path, struct D2dModel **out);

/**
 * Number of trainable parameters, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle from this library.
 */
size_t d2d_model_num_params(const struct D2dModel *model);

/**
 * Power amplitudes the model assigns to `ch`. `star_seed` selects the sampled stars
 * (ignored by the classical model).
 *
 * # Safety
 * `model` and `ch` must be live handles and `out` must hold `len` doubles.
 */
enum D2dStatus d2d_model_powers(const struct D2dModel *model,
                                const struct D2dChannel *ch,
                                uint64_t star_seed,
                                double *out,
                                size_t len);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void d2d_model_free(struct D2dModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2D_QGNN_H */
