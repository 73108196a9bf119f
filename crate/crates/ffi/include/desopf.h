#ifndef DESOPF_H
#define DESOPF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DesopfMethod {
  DESOPF_METHOD_MILP = 0,
  DESOPF_METHOD_BL1 = 1,
  DESOPF_METHOD_BL2 = 2,
  DESOPF_METHOD_MINLP = 3,
} DesopfMethod;

typedef enum DesopfConfiguration {
  DESOPF_CONFIGURATION_DELTA = 0,
  DESOPF_CONFIGURATION_WYE = 1,
} DesopfConfiguration;

typedef enum DesopfStatus {
  DESOPF_STATUS_OK = 0,
  DESOPF_STATUS_NULL_ARGUMENT = 1,
  DESOPF_STATUS_INVALID_ARGUMENT = 2,
  DESOPF_STATUS_LOAD_FAILED = 3,
  DESOPF_STATUS_SOLVE_FAILED = 4,
  DESOPF_STATUS_NO_VALUE = 5,
  DESOPF_STATUS_PANIC = 6,
} DesopfStatus;

typedef enum DesopfOutcome {
  DESOPF_OUTCOME_OPTIMAL = 0,
  DESOPF_OUTCOME_LOCALLY_OPTIMAL = 1,
  DESOPF_OUTCOME_INFEASIBLE = 2,
  DESOPF_OUTCOME_NO_INCUMBENT = 3,
  DESOPF_OUTCOME_FAILED = 4,
} DesopfOutcome;

// Opaque case handle.
typedef struct DesopfCase DesopfCase;

// Opaque result handle.
typedef struct DesopfResult DesopfResult;

// Run options. Obtain defaults from [`desopf_options_default`].
typedef struct DesopfOptions {
  enum DesopfMethod method;
  enum DesopfConfiguration configuration;
  // 1 = no storage, 2 = with storage.
  uint8_t scenario;
  // Nonzero: BL-1 also fixes the MILP schedule.
  uint8_t fix_operations;
  size_t node_limit;
  double time_limit_s;
} DesopfOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Last error message on this thread, or NULL. Valid until the next call
// that fails on the same thread.
const char *desopf_last_error(void);

struct DesopfOptions desopf_options_default(void);

// The bundled five-building example case.
struct DesopfCase *desopf_case_example(void);

// Loads a case directory.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum DesopfStatus desopf_case_load(const char *dir, struct DesopfCase **out);

// # Safety
// `case` must come from this library and not be used afterwards.
void desopf_case_free(struct DesopfCase *case_);

// # Safety
// `case` must be a live case handle or NULL.
size_t desopf_case_building_count(const struct DesopfCase *case_);

// Runs one method (computing its prerequisites) and stores the result.
// Infeasible outcomes are still `DESOPF_STATUS_OK`; inspect them with
// [`desopf_result_outcome`].
//
// # Safety
// `case` must be a live case handle and `out` a valid pointer.
enum DesopfStatus desopf_run(const struct DesopfCase *case_,
                             const struct DesopfOptions *options,
                             struct DesopfResult **out);

// # Safety
// `result` must come from this library and not be used afterwards.
void desopf_result_free(struct DesopfResult *result);

// # Safety
// `result` must be a live result handle or NULL.
enum DesopfOutcome desopf_result_outcome(const struct DesopfResult *result);

// Annualised cost in £/yr. `DESOPF_STATUS_NO_VALUE` for infeasible results.
//
// # Safety
// `result` must be a live result handle and `out` a valid pointer.
enum DesopfStatus desopf_result_objective(const struct DesopfResult *result, double *out);

// Installed PV capacity, kWp.
//
// # Safety
// As [`desopf_result_objective`].
enum DesopfStatus desopf_result_pv_kw(const struct DesopfResult *result, double *out);

// Installed battery capacity, kWh.
//
// # Safety
// As [`desopf_result_objective`].
enum DesopfStatus desopf_result_storage_kwh(const struct DesopfResult *result, double *out);

// Largest branch current excess over its limit, percent (0 when none).
// Needs a network solution, so MILP results give `DESOPF_STATUS_NO_VALUE`.
//
// # Safety
// As [`desopf_result_objective`].
enum DesopfStatus desopf_result_max_current_excess_pct(const struct DesopfResult *result,
                                                       double *out);

// Number of current and voltage limit violations.
//
// # Safety
// `result` must be a live result handle or NULL.
size_t desopf_result_violation_count(const struct DesopfResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DESOPF_H */
