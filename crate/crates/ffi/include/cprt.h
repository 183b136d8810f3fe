#ifndef CPRT_H
#define CPRT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum CprtStatus {
  CPRT_STATUS_OK = 0,
  CPRT_STATUS_NULL_POINTER = 1,
  CPRT_STATUS_INVALID_ARGUMENT = 2,
  CPRT_STATUS_PARSE_ERROR = 3,
  CPRT_STATUS_VALIDATION_ERROR = 4,
  CPRT_STATUS_IO_ERROR = 5,
  CPRT_STATUS_OUT_OF_RANGE = 6,
  CPRT_STATUS_INTERNAL = 7,
} CprtStatus;

/**
 * Opaque taxonomy handle. Create with one of the `cprt_registry_*`
 * constructors and release with [`cprt_registry_free`].
 */
typedef struct CprtRegistry CprtRegistry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cprt_version(void);

/**
 * Message for the most recent failure on this thread, or an empty string.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *cprt_last_error(void);

/**
 * The built-in 22-attribute taxonomy. Never returns null.
 */
struct CprtRegistry *cprt_registry_canonical(void);

/**
 * Parses and validates a taxonomy from JSON text.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CprtStatus cprt_registry_from_json(const char *json, struct CprtRegistry **out);

/**
 * Loads and validates a taxonomy file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CprtStatus cprt_registry_load(const char *path, struct CprtRegistry **out);

/**
 * Releases a registry. Null is ignored.
 *
 * # Safety
 * `registry` must come from a `cprt_registry_*` constructor and not be used
 * afterwards.
 */
void cprt_registry_free(struct CprtRegistry *registry);

/**
 * Number of attributes in the registry, or 0 for null.
 *
 * # Safety
 * `registry` must be null or a live handle.
 */
size_t cprt_registry_attribute_count(const struct CprtRegistry *registry);

/**
 * Scores per-level attribute counts. `out_level` may be null.
 *
 * # Safety
 * `registry` must be a live handle, `counts` must point to 4 values and
 * `out_score` must be valid.
 */
enum CprtStatus cprt_score_counts(const struct CprtRegistry *registry,
                                  const uint64_t *counts,
                                  double *out_score,
                                  int32_t *out_level);

/**
 * Scores a binary attribute vector in registry order. `out_level` may be
 * null.
 *
 * # Safety
 * `registry` must be a live handle, `vector` must point to `len` bytes and
 * `out_score` must be valid.
 */
enum CprtStatus cprt_score_vector(const struct CprtRegistry *registry,
                                  const uint8_t *vector,
                                  size_t len,
                                  double *out_score,
                                  int32_t *out_level);

/**
 * Level (1..=4) of the registry interval containing `score`.
 *
 * # Safety
 * `registry` must be a live handle and `out_level` valid.
 */
enum CprtStatus cprt_bucketize(const struct CprtRegistry *registry,
                               double score,
                               int32_t *out_level);

/**
 * Level (1..=4) from the four decision answers, taken in order.
 *
 * # Safety
 * `answers` must point to 4 values and `out_level` must be valid.
 */
enum CprtStatus cprt_classify(const bool *answers, int32_t *out_level);

/**
 * Smallest weights satisfying the dominance constraint for the given
 * per-level cardinalities.
 *
 * # Safety
 * `cardinalities` and `out_weights` must each point to 4 values.
 */
enum CprtStatus cprt_minimal_weights(const uint64_t *cardinalities, uint64_t *out_weights);

/**
 * Extracts a score in [0, 1] from free-form model output.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string and `out_score` valid.
 */
enum CprtStatus cprt_parse_response(const char *text, double *out_score);

/**
 * Pearson correlation of two arrays of length `len`.
 *
 * # Safety
 * `x` and `y` must point to `len` values; `out` must be valid.
 */
enum CprtStatus cprt_pearson(const double *x, const double *y, size_t len, double *out);

/**
 * Spearman correlation (average ranks for ties).
 *
 * # Safety
 * `x` and `y` must point to `len` values; `out` must be valid.
 */
enum CprtStatus cprt_spearman(const double *x, const double *y, size_t len, double *out);

/**
 * Cohen's kappa of two binary label arrays. `out_degenerate` (optional) is
 * set when kappa is undefined and reported as 0.
 *
 * # Safety
 * `a` and `b` must point to `len` values; `out` must be valid.
 */
enum CprtStatus cprt_kappa(const uint8_t *a,
                           const uint8_t *b,
                           size_t len,
                           double *out,
                           bool *out_degenerate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CPRT_H */
