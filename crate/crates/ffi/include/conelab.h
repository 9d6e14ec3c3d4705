#ifndef CONELAB_H
#define CONELAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum ConelabStatus {
  CONELAB_STATUS_OK = 0,
  CONELAB_STATUS_NULL_POINTER = 1,
  CONELAB_STATUS_INVALID_UTF8 = 2,
  CONELAB_STATUS_PARSE = 3,
  CONELAB_STATUS_INVALID_INPUT = 4,
  /**
   * The computation itself failed; see `conelab_last_error`.
   */
  CONELAB_STATUS_COMPUTE = 5,
  CONELAB_STATUS_PANIC = 6,
} ConelabStatus;

/**
 * Verdict of a checker, numbered like the CLI exit codes.
 */
typedef enum ConelabVerdict {
  CONELAB_VERDICT_PASS = 0,
  CONELAB_VERDICT_FAIL = 2,
  CONELAB_VERDICT_INCONCLUSIVE = 3,
} ConelabVerdict;

/**
 * Opaque cone handle.
 */
typedef struct ConelabCone ConelabCone;

/**
 * Opaque finite metric space handle.
 */
typedef struct ConelabSpace ConelabSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread (empty after a success).
 * Valid until the next call into the library on the same thread.
 */
const char *conelab_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *conelab_version(void);

/**
 * Builds a cone from a cone spec JSON document or `preset:NAME`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ConelabStatus conelab_cone_from_json(const char *json, struct ConelabCone **out);

/**
 * Releases a cone. Null is ignored.
 *
 * # Safety
 * `cone` must come from `conelab_cone_from_json` and not be freed twice.
 */
void conelab_cone_free(struct ConelabCone *cone);

/**
 * Number of time rows and fiber points.
 *
 * # Safety
 * `cone` must be a live handle; `nt` and `nx` valid pointers.
 */
enum ConelabStatus conelab_cone_dims(const struct ConelabCone *cone, uintptr_t *nt, uintptr_t *nx);

/**
 * Lower and upper time separation from `(t0, x0)` to `(t1, x1)`; both are
 * `-INFINITY` for non-causal pairs.
 *
 * # Safety
 * `cone` must be a live handle; `lo` and `hi` valid pointers.
 */
enum ConelabStatus conelab_cone_tau(const struct ConelabCone *cone,
                                    uintptr_t t0,
                                    uintptr_t x0,
                                    uintptr_t t1,
                                    uintptr_t x1,
                                    double *lo,
                                    double *hi);

/**
 * Four-point comparison check on `samples` seeded configurations.
 *
 * # Safety
 * `cone` must be a live handle; `worst_margin` and `verdict` valid pointers.
 */
enum ConelabStatus conelab_cone_tcbb(const struct ConelabCone *cone,
                                     double k,
                                     uintptr_t samples,
                                     double tol,
                                     uint64_t seed,
                                     double *worst_margin,
                                     enum ConelabVerdict *verdict);

/**
 * Builds a finite metric space from `{n, base, dist}`, `{"segment": ...}`
 * or `{"circleArc": ...}` JSON.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum ConelabStatus conelab_space_from_json(const char *json, struct ConelabSpace **out);

/**
 * Releases a metric space. Null is ignored.
 *
 * # Safety
 * `space` must come from `conelab_space_from_json` and not be freed twice.
 */
void conelab_space_free(struct ConelabSpace *space);

/**
 * Gromov-Hausdorff bracket; `exact` selects exhaustive search (small
 * spaces only) over the heuristic.
 *
 * # Safety
 * `a` and `b` must be live handles; `lower` and `upper` valid pointers.
 */
enum ConelabStatus conelab_gh(const struct ConelabSpace *a,
                              const struct ConelabSpace *b,
                              bool exact,
                              double *lower,
                              double *upper);

/**
 * Runs an experiment config (the JSON accepted by `conelab run`) and hands
 * back the report as a newly allocated JSON string. Relative paths resolve
 * against the current directory. `exit_code` receives the CLI exit code
 * (0, 2 or 3). Release the report with `conelab_string_free`.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string; `report` and
 * `exit_code` valid pointers.
 */
enum ConelabStatus conelab_run_json(const char *config_json, char **report, int32_t *exit_code);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void conelab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONELAB_H */
