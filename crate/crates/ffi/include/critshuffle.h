#ifndef CRITSHUFFLE_H
#define CRITSHUFFLE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define CS_DIRECTION_FORWARD 0

#define CS_DIRECTION_REVERSE 1

#define CS_DIRECTION_TWO_SIDED 2

/**
 * Result code of every fallible call.
 */
typedef enum CsStatus {
  CS_OK = 0,
  CS_INVALID_ARGUMENT = 1,
  CS_NULL_POINTER = 2,
  CS_TRUNCATION = 3,
  CS_OUT_OF_RANGE = 4,
  CS_GUARD = 5,
  CS_PARSE = 6,
  CS_PANIC = 7,
} CsStatus;

/**
 * Probability law on a contiguous integer window.
 */
typedef struct CsIntDist CsIntDist;

/**
 * Piecewise-affine trade-off curve.
 */
typedef struct CsTradeoff CsTradeoff;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the next failing call.
 */
const char *cs_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cs_version(void);

/**
 * Builds a law from `len` masses starting at `offset` plus an unplaced `tail_mass`.
 *
 * # Safety
 * `mass` must point to `len` readable doubles; `out` must be writable.
 */
enum CsStatus cs_int_dist_new(int64_t offset,
                              const double *mass,
                              size_t len,
                              double tail_mass,
                              struct CsIntDist **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_int_dist_binomial(uint64_t m, double p, struct CsIntDist **out);

/**
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_int_dist_poisson(double lambda, double tail_eps, struct CsIntDist **out);

/**
 * Skellam law of `Poi(lambda0) - Poi(lambda1)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_int_dist_skellam(double lambda0,
                                  double lambda1,
                                  double tail_eps,
                                  struct CsIntDist **out);

/**
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum CsStatus cs_int_dist_convolve(const struct CsIntDist *a,
                                   const struct CsIntDist *b,
                                   struct CsIntDist **out);

/**
 * # Safety
 * `d` must be NULL or a handle not yet freed.
 */
void cs_int_dist_free(struct CsIntDist *d);

/**
 * Smallest support point, length of the mass window and unplaced tail mass.
 *
 * # Safety
 * `d` must be a live handle; out-pointers must be writable.
 */
enum CsStatus cs_int_dist_info(const struct CsIntDist *d,
                               int64_t *offset,
                               size_t *len,
                               double *tail_mass);

/**
 * Mass at `x`; 0 off the support.
 *
 * # Safety
 * `d` must be a live handle; `out` must be writable.
 */
enum CsStatus cs_int_dist_pmf(const struct CsIntDist *d, int64_t x, double *out);

/**
 * Total variation distance as a `[lower, upper]` interval; the width is the unplaced tail mass.
 *
 * # Safety
 * `a`, `b` must be live handles; out-pointers must be writable.
 */
enum CsStatus cs_tv_distance(const struct CsIntDist *a,
                             const struct CsIntDist *b,
                             double *lower,
                             double *upper);

/**
 * Hockey-stick divergence `delta(eps)` in the given `CS_DIRECTION_*`.
 *
 * # Safety
 * `p`, `q` must be live handles; `value` must be writable; `slack` may be NULL.
 */
enum CsStatus cs_delta(const struct CsIntDist *p,
                       const struct CsIntDist *q,
                       double eps,
                       uint32_t dir,
                       double *value,
                       double *slack);

/**
 * Canonical randomized-response pair at `n` with `e^eps0 = c^2 n` and an all-zeros null.
 *
 * # Safety
 * Out-pointers must be writable.
 */
enum CsStatus cs_rr_canonical_pair(uint64_t n,
                                   double c,
                                   struct CsIntDist **out_p,
                                   struct CsIntDist **out_q);

/**
 * Centered composition pair with `k` one-inputs under the null and local level `eps0`.
 *
 * # Safety
 * Out-pointers must be writable.
 */
enum CsStatus cs_rr_composition_pair(uint64_t n,
                                     double eps0,
                                     uint64_t k,
                                     struct CsIntDist **out_p,
                                     struct CsIntDist **out_q);

/**
 * `(Poi(lambda), 1 + Poi(lambda))`.
 *
 * # Safety
 * Out-pointers must be writable.
 */
enum CsStatus cs_poisson_shift_pair(double lambda,
                                    double tail_eps,
                                    struct CsIntDist **out_p,
                                    struct CsIntDist **out_q);

/**
 * Skellam-shift limit pair for critical constant `c` and one-fraction `pi`.
 *
 * # Safety
 * Out-pointers must be writable.
 */
enum CsStatus cs_skellam_shift_pair(double c,
                                    double pi,
                                    double tail_eps,
                                    struct CsIntDist **out_p,
                                    struct CsIntDist **out_q);

/**
 * Closed-form forward `delta(eps)` of the Poisson-shift pair.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_poisson_shift_delta(double lambda, double eps, double *out);

/**
 * Trade-off curve of testing `p` against `q`.
 *
 * # Safety
 * `p`, `q` must be live handles; `out` must be writable.
 */
enum CsStatus cs_tradeoff_new(const struct CsIntDist *p,
                              const struct CsIntDist *q,
                              struct CsTradeoff **out);

/**
 * Exact trade-off curve of the Poisson-shift pair.
 *
 * # Safety
 * `out` must be writable.
 */
enum CsStatus cs_tradeoff_poisson_shift(double lambda, struct CsTradeoff **out);

/**
 * # Safety
 * `t` must be NULL or a handle not yet freed.
 */
void cs_tradeoff_free(struct CsTradeoff *t);

/**
 * Number of knots.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum CsStatus cs_tradeoff_len(const struct CsTradeoff *t, size_t *out);

/**
 * Knot `i` as `(alpha, beta)`.
 *
 * # Safety
 * `t` must be a live handle; out-pointers must be writable.
 */
enum CsStatus cs_tradeoff_knot(const struct CsTradeoff *t, size_t i, double *alpha, double *beta);

/**
 * `f(alpha)` for `alpha` in `[0, 1]`.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum CsStatus cs_tradeoff_eval(const struct CsTradeoff *t, double alpha, double *out);

/**
 * `delta(eps)` recovered from the curve by convex duality.
 *
 * # Safety
 * `t` must be a live handle; `out` must be writable.
 */
enum CsStatus cs_tradeoff_delta(const struct CsTradeoff *t, double eps, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRITSHUFFLE_H */
