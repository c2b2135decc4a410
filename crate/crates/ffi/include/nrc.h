#ifndef NRC_H
#define NRC_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by all entry points.
 */
typedef enum NrcStatus {
  NRC_STATUS_OK = 0,
  NRC_STATUS_NULL_POINTER = 1,
  NRC_STATUS_INVALID_UTF8 = 2,
  NRC_STATUS_INVALID_ARGUMENT = 3,
  NRC_STATUS_WRONG_KIND = 4,
  NRC_STATUS_UNSUPPORTED = 5,
  NRC_STATUS_EMPTY_TARGET = 6,
  NRC_STATUS_IO = 7,
  NRC_STATUS_PARSE = 8,
  NRC_STATUS_BACKEND = 9,
  NRC_STATUS_PANIC = 10,
} NrcStatus;

typedef enum NrcKind {
  NRC_KIND_CLM = 0,
  NRC_KIND_MLM = 1,
  NRC_KIND_RTD = 2,
} NrcKind;

typedef enum NrcMetric {
  NRC_METRIC_PPL_CLM = 0,
  NRC_METRIC_PPL_MLM = 1,
  NRC_METRIC_NRC = 2,
} NrcMetric;

typedef enum NrcTarget {
  NRC_TARGET_Q = 0,
  NRC_TARGET_A = 1,
  NRC_TARGET_QA = 2,
} NrcTarget;

/**
 * Opaque model handle.
 */
typedef struct NrcBackend NrcBackend;

/**
 * Scoring configuration passed by value.
 */
typedef struct NrcPolicy {
  enum NrcMetric metric;
  enum NrcTarget target;
  bool remove_stopwords;
  double delta_w;
  /**
   * Read the discriminator as P(original); lower scores win.
   */
  bool rtd_original;
} NrcPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens a fixture file as a backend of the given kind.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum NrcStatus nrc_fixture_open(const char *path, enum NrcKind kind, struct NrcBackend **out);

/**
 * Opens a model bundle directory. Fails with `Unsupported` when the
 * library was built without ONNX support.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
enum NrcStatus nrc_bundle_open(const char *dir, struct NrcBackend **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `backend` must come from an `nrc_*_open` call and not be used afterwards.
 */
void nrc_backend_free(struct NrcBackend *backend);

/**
 * # Safety
 * `backend` must be a live handle and `out` writable.
 */
enum NrcStatus nrc_backend_kind(const struct NrcBackend *backend, enum NrcKind *out);

/**
 * Sequence forwards run so far.
 *
 * # Safety
 * `backend` must be a live handle and `out` writable.
 */
enum NrcStatus nrc_backend_forwards(const struct NrcBackend *backend, uint64_t *out);

/**
 * Scores one choice of an instance given as a JSON object in the unified
 * instance format. Writes the aggregate and its orientation (1 when higher
 * is better, 0 otherwise).
 *
 * # Safety
 * Pointers must be valid; `instance_json` NUL-terminated.
 */
enum NrcStatus nrc_score_choice(const struct NrcBackend *backend,
                                const char *instance_json,
                                size_t choice,
                                struct NrcPolicy policy,
                                double *out_aggregate,
                                bool *out_higher_better);

/**
 * Weighted mean of `scores` under `weights`, both of length `n`.
 *
 * # Safety
 * `scores` and `weights` must point to `n` values; `out` writable.
 */
enum NrcStatus nrc_aggregate(const double *scores, const double *weights, size_t n, double *out);

/**
 * Two-sided paired permutation p-value for per-instance correctness
 * vectors (nonzero means correct). Exact up to 20 pairs, seeded Monte
 * Carlo above.
 *
 * # Safety
 * `a` and `b` must point to `n` bytes; `out` writable.
 */
enum NrcStatus nrc_permutation_p_value(const uint8_t *a,
                                       const uint8_t *b,
                                       size_t n,
                                       uint64_t seed,
                                       double *out);

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to fit) and returns the full message length in bytes.
 *
 * # Safety
 * `buf` must hold `len` bytes, or be null with `len` 0.
 */
size_t nrc_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nrc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NRC_H */
