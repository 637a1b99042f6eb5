#ifndef DISTORTIA_H
#define DISTORTIA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DistortiaStatus {
  DISTORTIA_STATUS_OK = 0,
  DISTORTIA_STATUS_NULL_POINTER = 1,
  DISTORTIA_STATUS_INVALID_ARGUMENT = 2,
  DISTORTIA_STATUS_DIMENSION_MISMATCH = 3,
  DISTORTIA_STATUS_KEY_OUT_OF_RANGE = 4,
  DISTORTIA_STATUS_IMPOSSIBLE_OBSERVATION = 5,
  DISTORTIA_STATUS_NUMERICAL = 6,
  DISTORTIA_STATUS_PANIC = 7,
} DistortiaStatus;

/**
 * Per-coordinate trajectory cipher for a perfectly observed plant.
 */
typedef struct DistortiaCipher DistortiaCipher;

/**
 * Affine reflection plane `{x : S x = b}`.
 */
typedef struct DistortiaPlane DistortiaPlane;

/**
 * Shifting+mirroring scalar encoder.
 */
typedef struct DistortiaSmScheme DistortiaSmScheme;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null after a
 * successful one. The pointer stays valid until the next call.
 */
const char *distortia_last_error(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum DistortiaStatus distortia_sm_new(double theta, uint32_t k, struct DistortiaSmScheme **out);

/**
 * # Safety
 * `scheme` must be null or a handle from [`distortia_sm_new`] not yet freed.
 */
void distortia_sm_free(struct DistortiaSmScheme *scheme);

/**
 * # Safety
 * `scheme` must be a live handle and `out` writable.
 */
enum DistortiaStatus distortia_sm_encode(const struct DistortiaSmScheme *scheme,
                                         double x,
                                         uint64_t key,
                                         double *out);

/**
 * # Safety
 * `scheme` must be a live handle and `out` writable.
 */
enum DistortiaStatus distortia_sm_decode(const struct DistortiaSmScheme *scheme,
                                         double z,
                                         uint64_t key,
                                         double *out);

/**
 * Worst-case distortion of a standard normal source and the symbol that
 * attains it.
 *
 * # Safety
 * `scheme` must be a live handle; `value` and `argmin` writable.
 */
enum DistortiaStatus distortia_sm_worst_case(const struct DistortiaSmScheme *scheme,
                                             double *value,
                                             double *argmin);

/**
 * Best window half-width for `k` key bits and a standard normal source,
 * with the default search grid.
 *
 * # Safety
 * `theta` and `dw` must be writable.
 */
enum DistortiaStatus distortia_optimize_theta(uint32_t k, double *theta, double *dw);

/**
 * Plane from a `rows x dim` row-major `s` and `rows` offsets `b`.
 *
 * # Safety
 * `s` must hold `rows * dim` values, `b` `rows` values, `out` writable.
 */
enum DistortiaStatus distortia_plane_new(const double *s,
                                         size_t rows,
                                         size_t dim,
                                         const double *b,
                                         struct DistortiaPlane **out);

/**
 * Point mirror at `center`.
 *
 * # Safety
 * `center` must hold `dim` values and `out` be writable.
 */
enum DistortiaStatus distortia_plane_point(const double *center,
                                           size_t dim,
                                           struct DistortiaPlane **out);

/**
 * # Safety
 * `plane` must be null or a live plane handle.
 */
void distortia_plane_free(struct DistortiaPlane *plane);

/**
 * # Safety
 * `plane` must be live; `x` and `out` must each hold `dim` values.
 */
enum DistortiaStatus distortia_plane_reflect(const struct DistortiaPlane *plane,
                                             const double *x,
                                             size_t dim,
                                             double *out);

/**
 * Cipher for `x' = A x + u` with `X_1 ~ N(mu, diag(variances))` and `k`
 * key bits per coordinate. `a` is `dim x dim` row-major.
 *
 * # Safety
 * `a` must hold `dim * dim` values, `mu` and `variances` `dim` values each.
 */
enum DistortiaStatus distortia_cipher_new(const double *a,
                                          size_t dim,
                                          const double *mu,
                                          const double *variances,
                                          double theta,
                                          uint32_t k,
                                          struct DistortiaCipher **out);

/**
 * # Safety
 * `cipher` must be null or a live cipher handle.
 */
void distortia_cipher_free(struct DistortiaCipher *cipher);

/**
 * Encodes `steps` states (row-major, `steps x dim`) with one key per
 * coordinate.
 *
 * # Safety
 * `ys` and `out` must hold `steps * dim` values, `keys` `n_keys` values.
 */
enum DistortiaStatus distortia_cipher_encode(const struct DistortiaCipher *cipher,
                                             const double *ys,
                                             size_t steps,
                                             const uint64_t *keys,
                                             size_t n_keys,
                                             double *out);

/**
 * Inverse of [`distortia_cipher_encode`].
 *
 * # Safety
 * Same layout requirements as [`distortia_cipher_encode`].
 */
enum DistortiaStatus distortia_cipher_decode(const struct DistortiaCipher *cipher,
                                             const double *zs,
                                             size_t steps,
                                             const uint64_t *keys,
                                             size_t n_keys,
                                             double *out);

/**
 * Eve's worst-case distortion `D(t)` and its analytic lower bound for
 * `t = 0..=t_max`, standard normal standardized initial state.
 *
 * # Safety
 * `measured` and `bound` must each hold `t_max + 1` values.
 */
enum DistortiaStatus distortia_cipher_evolution(const struct DistortiaCipher *cipher,
                                                size_t t_max,
                                                double *measured,
                                                double *bound);

/**
 * `lambda_min(B'B) * d_u` for a `rows x cols` row-major `B`.
 *
 * # Safety
 * `b` must hold `rows * cols` values and `out` be writable.
 */
enum DistortiaStatus distortia_state_bound(double d_u,
                                           const double *b,
                                           size_t rows,
                                           size_t cols,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTORTIA_H */
