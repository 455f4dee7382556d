#ifndef DOPF_H
#define DOPF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DopfCaseFormat {
  /**
   * MATPOWER `.m` subset.
   */
  DOPF_CASE_FORMAT_MATPOWER = 0,
  /**
   * Line-oriented `bus ...`, `gen ...` records.
   */
  DOPF_CASE_FORMAT_STRUCTURED = 1,
} DopfCaseFormat;

typedef enum DopfScheme {
  DOPF_SCHEME_VANILLA = 0,
  DOPF_SCHEME_OVER_RELAXED = 1,
  DOPF_SCHEME_FAST = 2,
  DOPF_SCHEME_ADAPTIVE = 3,
  DOPF_SCHEME_OVER_RELAXED_ADAPTIVE = 4,
  DOPF_SCHEME_FAST_ADAPTIVE = 5,
} DopfScheme;

typedef enum DopfStatus {
  DOPF_STATUS_OK = 0,
  DOPF_STATUS_NULL_POINTER = 1,
  DOPF_STATUS_INVALID_UTF8 = 2,
  DOPF_STATUS_IO = 3,
  DOPF_STATUS_PARSE = 4,
  /**
   * The case parsed but cannot be turned into a network.
   */
  DOPF_STATUS_VALIDATION = 5,
  DOPF_STATUS_INVALID_CONFIG = 6,
  /**
   * A subproblem failed, for example an infeasible branch.
   */
  DOPF_STATUS_SOLVER = 7,
  /**
   * The run hit its iteration cap. The report is still produced.
   */
  DOPF_STATUS_NOT_CONVERGED = 8,
  DOPF_STATUS_PANIC = 9,
  /**
   * An index past the end of a report's trace.
   */
  DOPF_STATUS_OUT_OF_RANGE = 10,
} DopfStatus;

typedef enum DopfVector {
  DOPF_VECTOR_X = 0,
  DOPF_VECTOR_Z = 1,
  DOPF_VECTOR_LAMBDA = 2,
  DOPF_VECTOR_RHO = 3,
} DopfVector;

/**
 * A parsed and validated case. Opaque.
 */
typedef struct DopfCase DopfCase;

/**
 * The outcome of one run. Opaque.
 */
typedef struct DopfReport DopfReport;

typedef struct DopfCaseCounts {
  size_t buses;
  size_t generators;
  size_t branches;
  /**
   * Length of the component-side vectors (x, lambda, rho).
   */
  size_t consensus_constraints;
  /**
   * Length of the bus-side vector z.
   */
  size_t bus_variables;
} DopfCaseCounts;

/**
 * Algorithm settings. Start from [`dopf_config_default`] and override
 * fields as needed.
 */
typedef struct DopfConfig {
  enum DopfScheme scheme;
  double alpha;
  double eta;
  double rho_power;
  double rho_voltage;
  double tau_incr;
  double tau_decr;
  double mu_incr;
  double mu_decr;
  size_t k_f;
  double eps_abs;
  double eps_rel;
  size_t max_iter;
  double rho_min;
  double rho_max;
  bool freeze_rho_between_restarts;
  /**
   * 0 lets the solver pick.
   */
  size_t threads;
} DopfConfig;

typedef struct DopfSummary {
  bool converged;
  size_t iterations;
  /**
   * $/h at the final dispatch.
   */
  double objective;
  double max_abs_r;
} DopfSummary;

typedef struct DopfTraceRow {
  size_t iter;
  double r_norm;
  double s_norm;
  double eps_pri;
  double eps_dual;
  double objective;
  double rho_min;
  double rho_max;
  bool restart;
} DopfTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dopf_version(void);

/**
 * Message for the last failed call on this thread, or NULL if the last call
 * succeeded. Valid until the next `dopf_` call on the same thread.
 */
const char *dopf_last_error_message(void);

/**
 * Reads a case file. Files ending in `.m` are parsed as MATPOWER, anything
 * else as the structured format.
 *
 * # Safety
 * `path` must be NULL or a NUL-terminated string; `out` must be NULL or
 * writable.
 */
enum DopfStatus dopf_case_load(const char *path, struct DopfCase **out);

/**
 * Parses a case from memory.
 *
 * # Safety
 * `text` must be NULL or a NUL-terminated string; `out` must be NULL or
 * writable.
 */
enum DopfStatus dopf_case_parse(const char *text,
                                enum DopfCaseFormat format,
                                struct DopfCase **out);

/**
 * # Safety
 * `case` must be NULL or a handle from `dopf_case_load`/`dopf_case_parse`
 * that has not been freed.
 */
void dopf_case_free(struct DopfCase *case_);

/**
 * # Safety
 * `case` must be NULL or a live case handle; `out` must be NULL or writable.
 */
enum DopfStatus dopf_case_counts(const struct DopfCase *case_, struct DopfCaseCounts *out);

/**
 * Default settings for `scheme`.
 */
struct DopfConfig dopf_config_default(enum DopfScheme scheme);

/**
 * Runs ADMM on `case`. On `DOPF_STATUS_OK` and `DOPF_STATUS_NOT_CONVERGED`
 * `*out` receives a report the caller frees with `dopf_report_free`; on any
 * other status it is set to NULL.
 *
 * # Safety
 * `case` must be NULL or a live case handle, `config` NULL or readable, and
 * `out` NULL or writable.
 */
enum DopfStatus dopf_solve(const struct DopfCase *case_,
                           const struct DopfConfig *config,
                           struct DopfReport **out);

/**
 * # Safety
 * `report` must be NULL or a handle from `dopf_solve` that has not been
 * freed.
 */
void dopf_report_free(struct DopfReport *report);

/**
 * # Safety
 * `report` must be NULL or a live report handle; `out` NULL or writable.
 */
enum DopfStatus dopf_report_summary(const struct DopfReport *report, struct DopfSummary *out);

/**
 * Number of trace rows, one per iteration. Zero for a NULL report.
 *
 * # Safety
 * `report` must be NULL or a live report handle.
 */
size_t dopf_report_trace_len(const struct DopfReport *report);

/**
 * Copies trace row `index` into `*out`.
 *
 * # Safety
 * `report` must be NULL or a live report handle; `out` NULL or writable.
 */
enum DopfStatus dopf_report_trace_row(const struct DopfReport *report,
                                      size_t index,
                                      struct DopfTraceRow *out);

/**
 * Copies one final iterate vector into `buf`. `*len` always receives the
 * full length; nothing is copied when `capacity` is smaller, which makes a
 * call with `buf = NULL, capacity = 0` a size query.
 *
 * # Safety
 * `report` must be NULL or a live report handle, `buf` NULL or valid for
 * `capacity` writes, and `len` NULL or writable.
 */
enum DopfStatus dopf_report_vector(const struct DopfReport *report,
                                   enum DopfVector which,
                                   double *buf,
                                   size_t capacity,
                                   size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOPF_H */
