/* C interface for the descobs observer library. */

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call in this interface.
 */
typedef enum DescobsStatus {
  /**
   * Call succeeded.
   */
  DescobsStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  DescobsStatus_NullPointer = 1,
  /**
   * Malformed file, string, or dimension disagreement.
   */
  DescobsStatus_InvalidInput = 2,
  /**
   * A solvability condition or certificate failed.
   */
  DescobsStatus_ConditionFailed = 3,
  /**
   * The run was infeasible or dynamically inconsistent.
   */
  DescobsStatus_SimulationFailed = 4,
  /**
   * Unexpected internal failure.
   */
  DescobsStatus_Internal = 5,
} DescobsStatus;

/**
 * Opaque realization handle (keeps the policy it was built under).
 */
typedef struct DescobsObserver DescobsObserver;

/**
 * Opaque system handle.
 */
typedef struct DescobsSystem DescobsSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *descobs_version(void);

/**
 * Explanation of the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *descobs_last_error(void);

/**
 * Loads a system description from a JSON file into a new handle.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum DescobsStatus descobs_system_load(const char *path, struct DescobsSystem **out);

/**
 * Releases a system handle. Null is ignored.
 *
 * # Safety
 * `sys` must be a pointer returned by this library and not yet freed.
 */
void descobs_system_free(struct DescobsSystem *sys);

/**
 * Reports the five dimensions of a loaded system. Null outputs are skipped.
 *
 * # Safety
 * `sys` must be a live handle; non-null outputs must be writable.
 */
enum DescobsStatus descobs_system_dims(const struct DescobsSystem *sys,
                                       size_t *m,
                                       size_t *n,
                                       size_t *l,
                                       size_t *p,
                                       size_t *r);

/**
 * Evaluates the solvability conditions under the default policy and
 * reports the verdicts and the implied observer order.
 *
 * # Safety
 * `sys` must be a live handle; non-null outputs must be writable.
 */
enum DescobsStatus descobs_check(const struct DescobsSystem *sys, bool *h1, bool *h2, size_t *q);

/**
 * Synthesizes an observer under the default policy (Riccati-based free
 * term) and returns a new realization handle.
 *
 * # Safety
 * `sys` must be a live handle and `out` writable storage for one pointer.
 */
enum DescobsStatus descobs_synthesize(const struct DescobsSystem *sys,
                                      struct DescobsObserver **out);

/**
 * Releases a realization handle. Null is ignored.
 *
 * # Safety
 * `obs` must be a pointer returned by this library and not yet freed.
 */
void descobs_observer_free(struct DescobsObserver *obs);

/**
 * Reports the order q of a realization.
 *
 * # Safety
 * `obs` must be a live handle; `q` must be writable if non-null.
 */
enum DescobsStatus descobs_observer_order(const struct DescobsObserver *obs, size_t *q);

/**
 * Writes a realization to a JSON file.
 *
 * # Safety
 * `obs` must be a live handle; `path` a NUL-terminated string.
 */
enum DescobsStatus descobs_observer_save(const struct DescobsObserver *obs, const char *path);

/**
 * Loads a realization from a JSON file into a new handle.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
enum DescobsStatus descobs_observer_load(const char *path, struct DescobsObserver **out);

/**
 * Re-checks a realization against a system; `ok` receives the verdict.
 * Returns ConditionFailed when the verdict is negative.
 *
 * # Safety
 * `sys` and `obs` must be live handles; `ok` writable if non-null.
 */
enum DescobsStatus descobs_verify(const struct DescobsSystem *sys,
                                  const struct DescobsObserver *obs,
                                  bool *ok);

/**
 * Runs plant and observer from zero initial conditions (observer matched
 * when `matched` is set) under unit sine inputs and writes the trace CSV.
 *
 * # Safety
 * `sys` and `obs` must be live handles; `out_path` a NUL-terminated string.
 */
enum DescobsStatus descobs_simulate_csv(const struct DescobsSystem *sys,
                                        const struct DescobsObserver *obs,
                                        double horizon,
                                        double dt,
                                        bool matched,
                                        const char *out_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus
