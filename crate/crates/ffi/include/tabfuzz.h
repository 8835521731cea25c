#ifndef TABFUZZ_H
#define TABFUZZ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum TfStatus {
  TF_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TF_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TF_STATUS_INVALID_UTF8 = 2,
  /**
   * Grammar or constraint text failed to parse.
   */
  TF_STATUS_PARSE = 3,
  /**
   * Invalid configuration, overrides or input schema.
   */
  TF_STATUS_CONFIG = 4,
  /**
   * The operation ran and failed.
   */
  TF_STATUS_RUNTIME = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  TF_STATUS_PANIC = 6,
} TfStatus;

/**
 * A parsed grammar with its constraints.
 */
typedef struct TfSpec TfSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *tf_last_error(void);

/**
 * Library version as a static string.
 */
const char *tf_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void tf_string_free(char *s);

/**
 * Parses grammar and constraint text into a new handle.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum TfStatus tf_spec_parse(const char *text, struct TfSpec **out);

/**
 * Releases a spec handle. Null is ignored.
 *
 * # Safety
 * `spec` must be null or a handle from [`tf_spec_parse`] not yet freed.
 */
void tf_spec_free(struct TfSpec *spec);

/**
 * Generates `count` rows satisfying the static constraints as CSV text
 * with a header. Free the result with [`tf_string_free`].
 *
 * # Safety
 * `spec` must be a live handle and `out` a valid pointer.
 */
enum TfStatus tf_spec_fuzz_csv(const struct TfSpec *spec, size_t count, uint64_t seed, char **out);

/**
 * Number of column symbols in the grammar's row layout, or 0 when the grammar
 * has no row layout.
 *
 * # Safety
 * `spec` must be null or a live handle.
 */
size_t tf_spec_column_count(const struct TfSpec *spec);

/**
 * First-order Wasserstein distance between two samples.
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` readable doubles; `out` must be valid.
 */
enum TfStatus tf_wasserstein_1d(const double *a,
                                size_t na,
                                const double *b,
                                size_t nb,
                                double *out);

/**
 * Runs the full pipeline for a config file. `overrides` holds
 * `n_overrides` strings of the form `key=value`; it may be null when
 * `n_overrides` is 0.
 *
 * # Safety
 * All pointers must be valid nul-terminated strings.
 */
enum TfStatus tf_synth_run(const char *config_path,
                           const char *const *overrides,
                           size_t n_overrides);

/**
 * Evaluates a synthetic CSV against an original CSV, writes the report
 * files to the config's output directory and returns the text report.
 *
 * # Safety
 * Path arguments must be nul-terminated strings and `report` a valid pointer.
 */
enum TfStatus tf_evaluate(const char *original,
                          const char *synthetic,
                          const char *config_path,
                          char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TABFUZZ_H */
