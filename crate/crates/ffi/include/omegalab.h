#ifndef OMEGALAB_H
#define OMEGALAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum OlStatus {
  OL_STATUS_OK = 0,
  OL_STATUS_NULL_POINTER = 1,
  OL_STATUS_DOMAIN = 2,
  OL_STATUS_USAGE = 3,
  OL_STATUS_NUMERIC = 4,
  OL_STATUS_VALIDATION = 5,
  OL_STATUS_PANIC = 6,
} OlStatus;

typedef struct OlBarrier OlBarrier;

typedef struct OlModel OlModel;

typedef struct OlOmegaScale OlOmegaScale;

typedef struct OlRate OlRate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ol_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ol_version(void);

/**
 * Model with a hyperexponential jump law of `n_jumps` components.
 *
 * # Safety
 * `weights` and `rates` point to `n_jumps` doubles; `out` is writable.
 */
enum OlStatus ol_model_new(double mu,
                           double sigma,
                           double lambda,
                           const double *weights,
                           const double *rates,
                           size_t n_jumps,
                           struct OlModel **out);

/**
 * The reference model: μ = 0.075, σ = 0.25, λ = 0.5, exponential jumps
 * with rate 9.
 *
 * # Safety
 * `out` is writable.
 */
enum OlStatus ol_model_reference(struct OlModel **out);

/**
 * # Safety
 * `model` is null or a handle from `ol_model_*` not yet freed.
 */
void ol_model_free(struct OlModel *model);

/**
 * `Φ(r)`, the largest root of `ψ(θ) = r`.
 *
 * # Safety
 * `model` is a live handle; `out` is writable.
 */
enum OlStatus ol_model_phi(const struct OlModel *model, double r, double *out);

/**
 * Scale function `W_q(x)` or one of its first two derivatives.
 *
 * # Safety
 * `model` is a live handle; `out` is writable.
 */
enum OlStatus ol_scale_w(const struct OlModel *model,
                         double q,
                         double x,
                         uint8_t deriv,
                         double *out);

/**
 * Constant rate `phi` on `(−∞, 0)`; `a <= 0` is the left end of the
 * solver grid.
 *
 * # Safety
 * `out` is writable.
 */
enum OlStatus ol_rate_parisian(double a, double phi, struct OlRate **out);

/**
 * Step family with `n` steps on `[a, 0)`.
 *
 * # Safety
 * `out` is writable.
 */
enum OlStatus ol_rate_step(size_t n, double a, double phi, struct OlRate **out);

/**
 * Affine family `φ + m(x − a)` on `[a, 0)`.
 *
 * # Safety
 * `out` is writable.
 */
enum OlStatus ol_rate_affine(double m, double a, double phi, struct OlRate **out);

/**
 * Piecewise-affine rate. `breakpoints` holds `n_breakpoints` increasing
 * values ending at 0; piece `k` on `[breakpoints[k], breakpoints[k+1])` is
 * `intercepts[k] + slopes[k] · (x − breakpoints[k])`.
 *
 * # Safety
 * `breakpoints` points to `n_breakpoints` doubles, `intercepts` and
 * `slopes` to `n_breakpoints − 1` doubles each; `out` is writable.
 */
enum OlStatus ol_rate_new(const double *breakpoints,
                          size_t n_breakpoints,
                          const double *intercepts,
                          const double *slopes,
                          double phi,
                          struct OlRate **out);

/**
 * # Safety
 * `rate` is null or a live handle.
 */
void ol_rate_free(struct OlRate *rate);

/**
 * `ω(x)`, right-continuous.
 *
 * # Safety
 * `rate` is a live handle; `out` is writable.
 */
enum OlStatus ol_rate_eval(const struct OlRate *rate, double x, double *out);

/**
 * Solve for the Omega scale function of `q + ω`. A `grid_step` of 0 or
 * less selects the default.
 *
 * # Safety
 * `model` and `rate` are live handles; `out` is writable.
 */
enum OlStatus ol_omega_solve(const struct OlModel *model,
                             const struct OlRate *rate,
                             double q,
                             double grid_step,
                             struct OlOmegaScale **out);

/**
 * # Safety
 * `scale` is null or a live handle.
 */
void ol_omega_free(struct OlOmegaScale *scale);

/**
 * `ℋ(x)` and its derivatives for `deriv` in 0..=2; the second derivative
 * is refused at kinks of `ω`.
 *
 * # Safety
 * `scale` is a live handle; `out` is writable.
 */
enum OlStatus ol_omega_eval(const struct OlOmegaScale *scale, double x, uint8_t deriv, double *out);

/**
 * Optimal barrier for `ω` at discount rate `q`.
 *
 * # Safety
 * `model` and `rate` are live handles; `out` is writable.
 */
enum OlStatus ol_barrier_solve(const struct OlModel *model,
                               const struct OlRate *rate,
                               double q,
                               double grid_step,
                               struct OlBarrier **out);

/**
 * # Safety
 * `barrier` is null or a live handle.
 */
void ol_barrier_free(struct OlBarrier *barrier);

/**
 * # Safety
 * `barrier` is a live handle; `out` is writable.
 */
enum OlStatus ol_barrier_b_star(const struct OlBarrier *barrier, double *out);

/**
 * Optimal value `v*(x)`.
 *
 * # Safety
 * `barrier` is a live handle; `out` is writable.
 */
enum OlStatus ol_barrier_value(const struct OlBarrier *barrier, double x, double *out);

/**
 * Monte Carlo estimate of the barrier-`b` value at `x0`. `killed` selects
 * the killed-path estimator instead of the discounted one.
 *
 * # Safety
 * `model` and `rate` are live handles; `mean` and `stderr` are writable.
 */
enum OlStatus ol_mc_value(const struct OlModel *model,
                          const struct OlRate *rate,
                          double q,
                          double b,
                          double x0,
                          size_t n_paths,
                          double dt,
                          uint64_t seed,
                          int killed,
                          double *mean,
                          double *stderr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OMEGALAB_H */
