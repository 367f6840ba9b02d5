#ifndef SWARMSTORE_H
#define SWARMSTORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SwarmPolicy {
  SWARM_POLICY_RASS = 0,
  SWARM_POLICY_HOPCOUNT = 1,
  SWARM_POLICY_STIGMERGY = 2,
} SwarmPolicy;

/**
 * Result of every call. Codes 2 to 4 match the command line exit codes.
 */
typedef enum SwarmStatus {
  SWARM_STATUS_OK = 0,
  /**
   * The simulation already ran all of its steps.
   */
  SWARM_STATUS_FINISHED = 1,
  SWARM_STATUS_CONFIG = 2,
  SWARM_STATUS_IO = 3,
  SWARM_STATUS_INVARIANT = 4,
  SWARM_STATUS_NULL_ARGUMENT = 5,
  /**
   * No step has run yet.
   */
  SWARM_STATUS_EMPTY = 6,
  /**
   * Invalid UTF-8 in an input string.
   */
  SWARM_STATUS_UTF8 = 7,
  SWARM_STATUS_PANIC = 8,
} SwarmStatus;

/**
 * Opaque simulation handle.
 */
typedef struct SwarmSim SwarmSim;

/**
 * Per-step metrics, one row of the series CSV.
 */
typedef struct SwarmStepRow {
  uint64_t step;
  uint64_t n_g;
  uint64_t n_l;
  double reliability_step;
  double reliability_cum;
  uint64_t items_on_agents;
  uint64_t items_at_base;
  uint64_t total_stored;
  double mean_memory_pct;
} SwarmStepRow;

/**
 * A radiation point source.
 */
typedef struct SwarmSource {
  double x;
  double y;
  /**
   * In `[0, 1]`.
   */
  double intensity;
} SwarmSource;

/**
 * Message for the last failed call on this thread, or NULL after a
 * successful call. The pointer is valid until the next call on this thread.
 */
const char *swarm_last_error_message(void);

/**
 * Build a simulation from scenario TOML text for one seed and a
 * `SwarmPolicy` value. On success `*out` receives a handle to release
 * with `swarm_sim_free`.
 *
 * # Safety
 * `scenario_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SwarmStatus swarm_sim_new(const char *scenario_toml,
                               uint64_t seed,
                               uint32_t policy,
                               struct SwarmSim **out);

/**
 * Release a handle. NULL is ignored.
 *
 * # Safety
 * `sim` must come from `swarm_sim_new` and not be freed twice.
 */
void swarm_sim_free(struct SwarmSim *sim);

/**
 * Advance one step. If `row` is not NULL it receives the step's metrics.
 * Returns `SWARM_STATUS_FINISHED` once every configured step has run.
 *
 * # Safety
 * `sim` must be a live handle; `row` may be NULL.
 */
enum SwarmStatus swarm_sim_step(struct SwarmSim *sim, struct SwarmStepRow *row);

/**
 * Run all remaining steps.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum SwarmStatus swarm_sim_run_to_end(struct SwarmSim *sim);

/**
 * Metrics of the most recent step.
 *
 * # Safety
 * `sim` must be a live handle and `row` a valid pointer.
 */
enum SwarmStatus swarm_sim_last_row(const struct SwarmSim *sim, struct SwarmStepRow *row);

/**
 * Steps run so far.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum SwarmStatus swarm_sim_current_step(const struct SwarmSim *sim, uint64_t *out);

/**
 * Number of data delivered to the base so far.
 *
 * # Safety
 * `sim` must be a live handle and `out` a valid pointer.
 */
enum SwarmStatus swarm_sim_delivery_count(const struct SwarmSim *sim, uint64_t *out);

/**
 * Storage fitness `1 / (alpha * hops + beta * risk)`; zero when
 * `available_memory` is zero and infinite for a zero cost.
 */
double swarm_fitness(size_t available_memory,
                     uint32_t hop_count,
                     double risk,
                     double alpha,
                     double beta);

/**
 * Per-step corruption probability of a datum stored at `(x, y)`.
 *
 * # Safety
 * `sources` must point to `count` elements (it may be NULL when `count` is
 * zero) and `out` must be a valid pointer.
 */
enum SwarmStatus swarm_corruption_probability(const struct SwarmSource *sources,
                                              size_t count,
                                              double x,
                                              double y,
                                              double decay,
                                              double corruption_scale,
                                              double *out);

#endif  /* SWARMSTORE_H */
