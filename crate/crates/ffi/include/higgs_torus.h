#ifndef HIGGS_TORUS_H
#define HIGGS_TORUS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes; the first four match the command-line exit codes.
 */
typedef enum HtStatus {
  HT_STATUS_OK = 0,
  HT_STATUS_NEGATIVE = 1,
  HT_STATUS_INVALID_INPUT = 2,
  HT_STATUS_NUMERICAL = 3,
  HT_STATUS_NULL_POINTER = 4,
  HT_STATUS_PANIC = 5,
} HtStatus;

typedef enum HtFlowVerdict {
  HT_FLOW_VERDICT_CONVERGED = 0,
  HT_FLOW_VERDICT_DEGENERATING = 1,
  HT_FLOW_VERDICT_BUDGET_EXHAUSTED = 2,
} HtFlowVerdict;

/**
 * Opaque Higgs datum.
 */
typedef struct HtDatum HtDatum;

/**
 * Opaque per-block metric.
 */
typedef struct HtMetric HtMetric;

/**
 * Numerical thresholds; see `ht_tolerances_default`.
 */
typedef struct HtTolerances {
  double tau_commute;
  double tau_rank;
  double tau_cluster;
  double kappa_max;
} HtTolerances;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

struct HtTolerances ht_tolerances_default(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library from the same thread.
 */
const char *ht_last_error(void);

/**
 * Parses and validates a datum from JSON bytes.
 *
 * # Safety
 * `json` must point to `len` readable bytes; `tol` may be null; `out` must be writable.
 */
enum HtStatus ht_datum_from_json(const uint8_t *json,
                                 size_t len,
                                 const struct HtTolerances *tol,
                                 struct HtDatum **out);

/**
 * Serializes a datum as NUL-terminated JSON.
 *
 * # Safety
 * `datum` must be a live handle; `out` must be writable.
 */
enum HtStatus ht_datum_to_json(const struct HtDatum *datum, char **out);

/**
 * Draws a planted polystable datum with `nblocks` blocks of the given sizes.
 *
 * # Safety
 * `sizes` must point to `nblocks` values; `out` must be writable.
 */
enum HtStatus ht_gen_planted(size_t dim,
                             const size_t *sizes,
                             size_t nblocks,
                             uint64_t seed,
                             struct HtDatum **out);

/**
 * Decides polystability. Returns `HT_STATUS_OK` when polystable and
 * `HT_STATUS_NEGATIVE` otherwise; `report` (nullable) receives the JSON report.
 *
 * # Safety
 * `datum` must be a live handle; `tol` and `report` may be null.
 */
enum HtStatus ht_check_polystable(const struct HtDatum *datum,
                                  const struct HtTolerances *tol,
                                  char **report);

/**
 * Writes the Levi type (multiplicities, descending) into `out[0..cap]` and
 * its full length into `len`. Returns `HT_STATUS_NEGATIVE` when the datum is
 * not polystable.
 *
 * # Safety
 * `datum` must be a live handle; `out` must hold `cap` values (may be null
 * when `cap` is 0); `len` must be writable.
 */
enum HtStatus ht_levi_type(const struct HtDatum *datum,
                           const struct HtTolerances *tol,
                           size_t *out,
                           size_t cap,
                           size_t *len);

/**
 * Builds the Yang–Mills metric of a polystable datum directly.
 *
 * # Safety
 * `datum` must be a live handle; `out` must be writable.
 */
enum HtStatus ht_construct_metric(const struct HtDatum *datum,
                                  const struct HtTolerances *tol,
                                  struct HtMetric **out);

/**
 * Runs the gradient flow from the identity metric. The final metric is
 * returned whatever the verdict; `steps` may be null.
 *
 * # Safety
 * `datum` must be a live handle; `out` and `verdict` must be writable.
 */
enum HtStatus ht_flow_solve(const struct HtDatum *datum,
                            const struct HtTolerances *tol,
                            size_t max_steps,
                            struct HtMetric **out,
                            enum HtFlowVerdict *verdict,
                            size_t *steps);

/**
 * Yang–Mills and flatness residuals of a metric; `ym` and `flatness` may be null.
 *
 * # Safety
 * `datum` and `metric` must be live handles.
 */
enum HtStatus ht_ym_residual(const struct HtDatum *datum,
                             const struct HtMetric *metric,
                             const struct HtTolerances *tol,
                             double *ym,
                             double *flatness);

/**
 * Parses and validates a metric from JSON bytes.
 *
 * # Safety
 * `json` must point to `len` readable bytes; `out` must be writable.
 */
enum HtStatus ht_metric_from_json(const uint8_t *json,
                                  size_t len,
                                  const struct HtTolerances *tol,
                                  struct HtMetric **out);

/**
 * Serializes a metric as NUL-terminated JSON.
 *
 * # Safety
 * `metric` must be a live handle; `out` must be writable.
 */
enum HtStatus ht_metric_to_json(const struct HtMetric *metric, char **out);

/**
 * # Safety
 * `datum` must be null or a handle not yet freed.
 */
void ht_datum_free(struct HtDatum *datum);

/**
 * # Safety
 * `metric` must be null or a handle not yet freed.
 */
void ht_metric_free(struct HtMetric *metric);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void ht_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIGGS_TORUS_H */
