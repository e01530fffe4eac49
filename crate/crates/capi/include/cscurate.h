#ifndef CSCURATE_H
#define CSCURATE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Metric selector, mirroring the scoring modes of the core library.
 */
typedef enum CscMetric {
  CSC_METRIC_CER = 0,
  CSC_METRIC_WER = 1,
  CSC_METRIC_MER = 2,
} CscMetric;

/**
 * Status codes returned by every fallible function.
 */
typedef enum CscStatus {
  CSC_STATUS_OK = 0,
  CSC_STATUS_NULL_ARGUMENT = 1,
  CSC_STATUS_INVALID_UTF8 = 2,
  CSC_STATUS_IO_ERROR = 3,
  CSC_STATUS_INVALID_DATA = 4,
} CscStatus;

/**
 * Opaque manifest handle.
 */
typedef struct CscManifest CscManifest;

/**
 * Error-rate result with raw counts.
 */
typedef struct CscErrorRate {
  uintptr_t errors;
  uintptr_t ref_len;
  double rate;
} CscErrorRate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread; do not free it.
 */
const char *cscurate_last_error_message(void);

/**
 * Scores `hyp_text` against `ref_text` in the given metric and writes the
 * result to `out`.
 *
 * # Safety
 * `ref_text` and `hyp_text` must be NUL-terminated strings; `out` must point
 * to a writable `CscErrorRate`.
 */
enum CscStatus cscurate_error_rate(const char *ref_text,
                                   const char *hyp_text,
                                   enum CscMetric metric,
                                   struct CscErrorRate *out);

/**
 * Greedy-vs-corrected discrepancy (corrected text as reference).
 *
 * # Safety
 * Both texts must be NUL-terminated strings; `out` must be writable.
 */
enum CscStatus cscurate_hypo_mer(const char *greedy_text,
                                 const char *corrected_text,
                                 enum CscMetric metric,
                                 double *out);

/**
 * Scoring normalization of `text`. The returned string must be freed with
 * `cscurate_string_free`; returns NULL on invalid input.
 *
 * # Safety
 * `text` must be a NUL-terminated string.
 */
char *cscurate_normalize(const char *text);

/**
 * Frees a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must originate from this library and not already be freed.
 */
void cscurate_string_free(char *s);

/**
 * Reads a manifest file into an opaque handle written to `out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable. The
 * handle must be released with `cscurate_manifest_free`.
 */
enum CscStatus cscurate_manifest_read(const char *path, struct CscManifest **out);

/**
 * Number of entries in a manifest handle; 0 for NULL.
 *
 * # Safety
 * `manifest` must be a live handle from `cscurate_manifest_read` or NULL.
 */
uintptr_t cscurate_manifest_len(const struct CscManifest *manifest);

/**
 * Total duration in seconds of all entries; 0 for NULL.
 *
 * # Safety
 * `manifest` must be a live handle from `cscurate_manifest_read` or NULL.
 */
double cscurate_manifest_total_duration_s(const struct CscManifest *manifest);

/**
 * Releases a manifest handle. NULL is a no-op.
 *
 * # Safety
 * `manifest` must originate from `cscurate_manifest_read` and not already
 * be freed.
 */
void cscurate_manifest_free(struct CscManifest *manifest);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CSCURATE_H */
