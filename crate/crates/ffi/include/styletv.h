#ifndef STYLETV_H
#define STYLETV_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a C API call.
 */
typedef enum StvStatus {
  StvStatus_Ok = 0,
  StvStatus_NullPointer = 1,
  StvStatus_InvalidUtf8 = 2,
  StvStatus_InvalidArgument = 3,
  StvStatus_EmptyDistribution = 4,
  StvStatus_InsufficientData = 5,
} StvStatus;

/**
 * Opaque term-count accumulator.
 */
typedef struct StvDistribution StvDistribution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an empty distribution handle. Never returns null.
 */
struct StvDistribution *stv_distribution_new(void);

/**
 * Releases a handle returned by `stv_distribution_new`. Null is a no-op.
 *
 * # Safety
 * `dist` must be a pointer previously returned by `stv_distribution_new`
 * and not yet freed.
 */
void stv_distribution_free(struct StvDistribution *dist);

/**
 * Adds `count` observations of `term` (UTF-8, NUL-terminated).
 *
 * # Safety
 * `dist` must be a live handle; `term` must point to a NUL-terminated
 * string valid for the duration of the call.
 */
enum StvStatus stv_distribution_add_term(struct StvDistribution *dist,
                                         const char *term,
                                         uint64_t count);

/**
 * Total observation count across all terms.
 *
 * # Safety
 * `dist` must be a live handle; `out` must be writable.
 */
enum StvStatus stv_distribution_total(const struct StvDistribution *dist, uint64_t *out);

/**
 * Total variation distance between two non-empty distributions, in [0, 1].
 *
 * # Safety
 * `p` and `q` must be live handles; `out` must be writable.
 */
enum StvStatus stv_tv_distance(const struct StvDistribution *p,
                               const struct StvDistribution *q,
                               double *out);

/**
 * Upper-tail probability of the chi-squared distribution.
 *
 * # Safety
 * `out` must be writable.
 */
enum StvStatus stv_chi2_upper_tail(double statistic, uint32_t df, double *out);

/**
 * Full two-style comparison: TV distance plus the tau-merged chi-squared
 * homogeneity test. Any out pointer may be null to skip that value.
 *
 * # Safety
 * `functional` and `decorative` must be live handles; non-null out
 * pointers must be writable.
 */
enum StvStatus stv_compare(const struct StvDistribution *functional,
                           const struct StvDistribution *decorative,
                           uint64_t tau,
                           double *tv_out,
                           double *chi2_out,
                           uint32_t *df_out,
                           double *p_value_out,
                           uintptr_t *k_effective_out);

/**
 * Terms in one top-N ranking but not the other, returned as two
 * newline-separated strings (empty string when the side is empty). Both
 * strings must be released with `stv_string_free`.
 *
 * # Safety
 * Handles must be live; out pointers must be writable.
 */
enum StvStatus stv_top_n_diff(const struct StvDistribution *functional,
                              const struct StvDistribution *decorative,
                              uintptr_t n,
                              char **only_functional_out,
                              char **only_decorative_out);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must be a pointer returned by this library and not yet freed.
 */
void stv_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STYLETV_H */
