#ifndef DUALITY_LAB_H
#define DUALITY_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  DL_OK = 0,
  DL_ERR_PARAMETER = 1,
  DL_ERR_CONFIG = 2,
  DL_ERR_RUN = 3,
  DL_ERR_NULL_POINTER = 4,
  DL_ERR_UTF8 = 5,
  DL_ERR_INDEX = 6,
} DlStatus;

/**
 * Opaque run result handle.
 */
typedef struct DlRunResult DlRunResult;

/**
 * One metric row, flattened for C consumption.
 */
typedef struct {
  double value;
  /**
   * Standard error (named to avoid the C `stderr` macro).
   */
  double std_error;
  double ci_low;
  double ci_high;
  uint64_t n_samples;
} DlMetric;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread; valid until the next failing call.
 */
const char *dl_last_error_message(void);

/**
 * Library version string (static storage).
 */
const char *dl_version(void);

/**
 * Parse a TOML experiment config and run it; writes result artifacts to
 * the config's output directory (or `output_dir_override` when non-null)
 * and hands back an opaque result handle.
 *
 * # Safety
 * `config_toml` must be a valid NUL-terminated string; `out` must be a
 * valid pointer.
 */
DlStatus dl_run_config(const char *config_toml, const char *output_dir_override, DlRunResult **out);

/**
 * Number of metric rows in a result.
 *
 * # Safety
 * `result` must be a handle from `dl_run_config` (or null, yielding 0).
 */
uintptr_t dl_result_row_count(const DlRunResult *result);

/**
 * Fetch row `index`: numeric fields into `metric`, the metric name into
 * `name_out` (caller frees with `dl_string_free`). Either out-pointer
 * may be null to skip it.
 *
 * # Safety
 * `result` must be a live handle; out-pointers must be valid or null.
 */
DlStatus dl_result_row(const DlRunResult *result,
                       uintptr_t index,
                       DlMetric *metric,
                       char **name_out);

/**
 * Whole result as CSV text (caller frees with `dl_string_free`).
 *
 * # Safety
 * `result` must be a live handle; `out` must be valid.
 */
DlStatus dl_result_csv(const DlRunResult *result, char **out);

/**
 * Semantic config hash of the run (caller frees).
 *
 * # Safety
 * `result` must be a live handle; `out` must be valid.
 */
DlStatus dl_result_config_hash(const DlRunResult *result, char **out);

/**
 * Release a result handle.
 *
 * # Safety
 * `result` must be a handle from `dl_run_config`, released once.
 */
void dl_result_free(DlRunResult *result);

/**
 * Release a string allocated by this library.
 *
 * # Safety
 * `s` must come from this library, released once.
 */
void dl_string_free(char *s);

/**
 * Critical moment curve `p(rho) = pi / arccos(-rho)`; `rho = -1` yields
 * infinity.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
DlStatus dl_critical_curve(double rho, double *out);

/**
 * Brownian-bridge barrier-crossing probability for a step of length
 * `dt`; `diffusivity` is the variance per unit time of the gap process.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
DlStatus dl_bridge_crossing_prob(double a, double b, double dt, double diffusivity, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DUALITY_LAB_H */
