#ifndef ICAD_H
#define ICAD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every call.
typedef enum IcadStatus {
  ICAD_STATUS_OK = 0,
  // A required pointer was null.
  ICAD_STATUS_NULL_POINTER = 1,
  // A parameter is out of range.
  ICAD_STATUS_INVALID_PARAMETER = 2,
  // Inputs are inconsistent or malformed.
  ICAD_STATUS_INVALID_INPUT = 3,
  // The config could not be parsed or validated.
  ICAD_STATUS_CONFIG = 4,
  // A numerical step failed.
  ICAD_STATUS_NUMERICAL = 5,
  // More detector runs aborted than the experiment tolerates.
  ICAD_STATUS_ABORT_RATE = 6,
  // A caller buffer is too small; the required size was reported.
  ICAD_STATUS_BUFFER_TOO_SMALL = 7,
  // File access failed.
  ICAD_STATUS_IO = 8,
  // Internal error.
  ICAD_STATUS_PANIC = 9,
} IcadStatus;

// Resolved experiment definition.
typedef struct IcadExperiment IcadExperiment;

// Detection problem built from caller data.
typedef struct IcadProblem IcadProblem;

// Outcome of [`icad_experiment_run`].
typedef struct IcadResults IcadResults;

// One result row of an experiment.
typedef struct IcadRow {
  // Index into the experiment's detector list.
  size_t detector;
  double sweep_value;
  double theta_star;
  double p_err;
  double p_miss;
  double p_fa;
  double ci95;
  size_t realizations;
} IcadRow;

// Complex number laid out as two doubles.
typedef struct IcadComplex {
  double re;
  double im;
} IcadComplex;

// Iteration controls for [`icad_problem_run`].
typedef struct IcadDetectorConfig {
  size_t max_iters;
  double tol;
  // Iterations between inverse refreshes; 0 disables them.
  size_t refresh_every;
  double drift_limit;
} IcadDetectorConfig;

// Run summary from [`icad_problem_run`].
typedef struct IcadRunInfo {
  size_t iterations;
  bool converged;
  double objective;
  double final_drift;
} IcadRunInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
//
// The pointer stays valid until the next icad call on the same thread.
const char *icad_last_error(void);

// Library version as a static NUL-terminated string.
const char *icad_version(void);

// Parses and validates a TOML experiment config.
//
// `profile` is `"desk"` or `"paper"` (null means paper). `overrides` holds
// `n_overrides` strings of the form `key.path=value`, applied last.
//
// # Safety
// String arguments must be valid NUL-terminated strings; `out` must be writable.
enum IcadStatus icad_experiment_from_toml(const char *toml_text,
                                          const char *profile,
                                          const char *const *overrides,
                                          size_t n_overrides,
                                          struct IcadExperiment **out);

// Resolved config as TOML text; see [`icad_results_csv`] for the buffer protocol.
//
// # Safety
// `exp` must come from [`icad_experiment_from_toml`]; `buf` must hold `len` bytes.
enum IcadStatus icad_experiment_toml(const struct IcadExperiment *exp,
                                     char *buf,
                                     size_t len,
                                     size_t *needed);

// Releases an experiment; null is ignored.
//
// # Safety
// `exp` must come from [`icad_experiment_from_toml`] and not be used afterwards.
void icad_experiment_free(struct IcadExperiment *exp);

// Runs the experiment on `workers` threads (0 = one per core).
//
// Results are returned even when the abort rate exceeds the configured
// limit; the status is then [`IcadStatus::AbortRate`] and `*out` is still set.
//
// # Safety
// `exp` must be a live experiment; `out` must be writable.
enum IcadStatus icad_experiment_run(const struct IcadExperiment *exp,
                                    size_t workers,
                                    struct IcadResults **out);

// Number of result rows.
//
// # Safety
// `res` must be a live results handle or null.
size_t icad_results_num_rows(const struct IcadResults *res);

// Number of detectors.
//
// # Safety
// `res` must be a live results handle or null.
size_t icad_results_num_detectors(const struct IcadResults *res);

// Name of detector `index`, owned by `res`.
//
// # Safety
// `res` must be a live results handle; `out` must be writable.
enum IcadStatus icad_results_detector_name(const struct IcadResults *res,
                                           size_t index,
                                           const char **out);

// Row `index`.
//
// # Safety
// `res` must be a live results handle; `row` must be writable.
enum IcadStatus icad_results_row(const struct IcadResults *res, size_t index, struct IcadRow *row);

// Fraction of detector runs that aborted.
//
// # Safety
// `res` must be a live results handle or null.
double icad_results_abort_rate(const struct IcadResults *res);

// Results as CSV text.
//
// `*needed` receives the size including the terminating NUL. If `buf` is
// null or `len` is smaller, nothing is written and the status is
// [`IcadStatus::BufferTooSmall`].
//
// # Safety
// `res` must be a live results handle; `buf` must hold `len` bytes.
enum IcadStatus icad_results_csv(const struct IcadResults *res,
                                 char *buf,
                                 size_t len,
                                 size_t *needed);

// Releases results; null is ignored.
//
// # Safety
// `res` must come from [`icad_experiment_run`] and not be used afterwards.
void icad_results_free(struct IcadResults *res);

// Builds an ML detection problem from caller data.
//
// `pilots` is the `l × n` pilot matrix, column-major. `gains` holds
// `num_aps × n` path losses, AP-major. `covs` holds `num_aps` sample
// covariances of size `l × l`, each column-major. More than one AP selects
// cooperative detection.
//
// # Safety
// Arrays must hold the stated number of elements; `out` must be writable.
enum IcadStatus icad_problem_new(size_t l,
                                 size_t n,
                                 size_t num_aps,
                                 const struct IcadComplex *pilots,
                                 const double *gains,
                                 const struct IcadComplex *covs,
                                 double noise,
                                 size_t m,
                                 struct IcadProblem **out);

// Switches to MAP estimation with independent activities of probability `p_a`.
//
// # Safety
// `problem` must be a live problem handle.
enum IcadStatus icad_problem_set_iid_prior(struct IcadProblem *problem, double p_a);

// Switches to MAP estimation with a Gaussian prior of `mean` and `var` on AP
// `ap`'s interference powers; `var = INFINITY` removes the penalty.
//
// # Safety
// `problem` must be a live problem handle.
enum IcadStatus icad_problem_set_interference_prior(struct IcadProblem *problem,
                                                    size_t ap,
                                                    double mean,
                                                    double var);

// Default iteration controls.
struct IcadDetectorConfig icad_detector_config_default(void);

// Runs coordinate descent from the all-zero start.
//
// Writes `n` soft activities to `a_out` and `num_aps × l` interference
// powers to `x_out` (AP-major). `cfg` and `info` may be null.
//
// # Safety
// `problem` must be a live problem handle; output arrays must hold the stated sizes.
enum IcadStatus icad_problem_run(const struct IcadProblem *problem,
                                 const struct IcadDetectorConfig *cfg,
                                 double *a_out,
                                 double *x_out,
                                 struct IcadRunInfo *info);

// Releases a problem; null is ignored.
//
// # Safety
// `problem` must come from [`icad_problem_new`] and not be used afterwards.
void icad_problem_free(struct IcadProblem *problem);

// Gaussian moments of the interference power: one AP without cooperation,
// seven with. Writes that many values to `mean_out` and `var_out`.
//
// # Safety
// Output arrays must hold 1 (or 7 with `coop`) doubles.
enum IcadStatus icad_interference_moments(double lambda,
                                          double r,
                                          double alpha,
                                          bool coop,
                                          double *mean_out,
                                          double *var_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICAD_H */
