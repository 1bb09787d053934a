#ifndef ZEROSTEALTH_H
#define ZEROSTEALTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum ZsStatus {
  ZS_STATUS_OK = 0,
  ZS_STATUS_NULL_POINTER = 1,
  ZS_STATUS_INVALID_UTF8 = 2,
  ZS_STATUS_INVALID_INPUT = 3,
  ZS_STATUS_INFEASIBLE = 4,
  ZS_STATUS_NUMERICAL = 5,
  ZS_STATUS_IO = 6,
  ZS_STATUS_OUT_OF_RANGE = 7,
  ZS_STATUS_PANIC = 8,
} ZsStatus;

/**
 * Synthesized attack plan.
 */
typedef struct ZsPlan ZsPlan;

/**
 * Validated scenario with its lifted model.
 */
typedef struct ZsScenario ZsScenario;

/**
 * Verification summary.
 */
typedef struct ZsVerification {
  bool stealthy;
  bool disruptive;
  double max_sampled_residual;
  /**
   * Smallest `‖x̃(t_k)‖ − H_k` over clusters; NaN when there are none.
   */
  double min_margin;
  size_t samples;
  size_t clusters;
} ZsVerification;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *zs_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void zs_string_free(char *s);

/**
 * Parses and validates a scenario document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum ZsStatus zs_scenario_from_json(const char *json, struct ZsScenario **out);

/**
 * Loads a built-in scenario by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum ZsStatus zs_scenario_demo(const char *name, struct ZsScenario **out);

/**
 * # Safety
 * `sc` must come from a scenario constructor and not have been freed.
 */
void zs_scenario_free(struct ZsScenario *sc);

/**
 * Redundancy report as a JSON string. Succeeds for infeasible scenarios
 * too; inspect the report.
 *
 * # Safety
 * `sc` must be a live handle; `out_json` must be writable.
 */
enum ZsStatus zs_analyze_json(const struct ZsScenario *sc, char **out_json);

/**
 * Synthesizes the attack plan. Returns `ZS_STATUS_INFEASIBLE` when the
 * redundancy conditions fail.
 *
 * # Safety
 * `sc` must be a live handle; `out` must be writable.
 */
enum ZsStatus zs_synthesize(const struct ZsScenario *sc, struct ZsPlan **out);

/**
 * # Safety
 * `plan` must come from [`zs_synthesize`] and not have been freed.
 */
void zs_plan_free(struct ZsPlan *plan);

/**
 * Number of holds and inputs per hold.
 *
 * # Safety
 * `plan` must be a live handle; the out pointers must be writable.
 */
enum ZsStatus zs_plan_dims(const struct ZsPlan *plan, size_t *holds, size_t *inputs);

/**
 * Copies hold `i` (`p` values) into `out`, which has room for `len`.
 *
 * # Safety
 * `plan` must be a live handle; `out` must point to `len` doubles.
 */
enum ZsStatus zs_plan_hold(const struct ZsPlan *plan, size_t i, double *out, size_t len);

/**
 * Full plan as a JSON string.
 *
 * # Safety
 * `plan` must be a live handle; `out_json` must be writable.
 */
enum ZsStatus zs_plan_to_json(const struct ZsPlan *plan, char **out_json);

/**
 * Simulates `plan` on the scenario's true clock and verifies it.
 *
 * # Safety
 * `sc` and `plan` must be live handles; `out` must be writable.
 */
enum ZsStatus zs_verify(const struct ZsScenario *sc,
                        const struct ZsPlan *plan,
                        struct ZsVerification *out);

/**
 * `out = exp(a t)` for a row-major `n x n` matrix.
 *
 * # Safety
 * `a` and `out` must each point to `n * n` doubles.
 */
enum ZsStatus zs_mat_exp(const double *a, size_t n, double t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZEROSTEALTH_H */
