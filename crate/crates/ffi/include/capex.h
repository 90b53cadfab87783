#ifndef CAPEX_H
#define CAPEX_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CapexStatus {
  CAPEX_STATUS_OK = 0,
  CAPEX_STATUS_NULL_POINTER = 1,
  CAPEX_STATUS_CONFIG = 2,
  CAPEX_STATUS_NUMERIC = 3,
  CAPEX_STATUS_CHECKPOINT = 4,
  CAPEX_STATUS_INFEASIBLE = 5,
  CAPEX_STATUS_IO = 6,
  CAPEX_STATUS_INVALID_UTF8 = 7,
  CAPEX_STATUS_PANIC = 8,
} CapexStatus;

/**
 * Trained policy loaded from a checkpoint.
 */
typedef struct CapexArtifact CapexArtifact;

/**
 * Simulation environment with its current state.
 */
typedef struct CapexEnv CapexEnv;

/**
 * A state of the capacity-expansion process. `demand` is NaN for the
 * price-only variant.
 */
typedef struct CapexState {
  uint32_t stage;
  double price;
  double demand;
  uint32_t installed;
} CapexState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *capex_version(void);

/**
 * Message of the last failed call on this thread, or null if none. The
 * pointer stays valid until the next failing call on this thread.
 */
const char *capex_last_error_message(void);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum CapexStatus capex_artifact_load(const char *path, struct CapexArtifact **out);

/**
 * Parses checkpoint text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` valid for writes.
 */
enum CapexStatus capex_artifact_from_json(const char *text, struct CapexArtifact **out);

/**
 * Number of decision heads (`K + 1`).
 *
 * # Safety
 * `artifact` must come from a `capex_artifact_*` constructor; `out` valid
 * for writes.
 */
enum CapexStatus capex_artifact_num_decisions(const struct CapexArtifact *artifact, uint32_t *out);

/**
 * Greedy feasible decision (units to add) at `state`.
 *
 * # Safety
 * `artifact` must come from a `capex_artifact_*` constructor, `state` must
 * point to a valid state and `out` be valid for writes.
 */
enum CapexStatus capex_artifact_greedy_decision(const struct CapexArtifact *artifact,
                                                const struct CapexState *state,
                                                uint32_t *out);

/**
 * Writes all `K + 1` Q-values at `state` into `out[0..len]`.
 *
 * # Safety
 * `artifact` and `state` as for [`capex_artifact_greedy_decision`]; `out`
 * must be valid for `len` writes.
 */
enum CapexStatus capex_artifact_q_values(const struct CapexArtifact *artifact,
                                         const struct CapexState *state,
                                         double *out,
                                         size_t len);

/**
 * Releases an artifact; null is ignored.
 *
 * # Safety
 * `artifact` must be null or come from a `capex_artifact_*` constructor
 * and not be used afterwards.
 */
void capex_artifact_free(struct CapexArtifact *artifact);

/**
 * Creates an environment from configuration text and a root seed. The
 * environment starts in its initial state.
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` valid for writes.
 */
enum CapexStatus capex_env_create(const char *config_text, uint64_t seed, struct CapexEnv **out);

/**
 * Starts a new episode and reports its initial state.
 *
 * # Safety
 * `env` must come from [`capex_env_create`]; `out_state` valid for writes.
 */
enum CapexStatus capex_env_reset(struct CapexEnv *env, struct CapexState *out_state);

/**
 * Current state without advancing.
 *
 * # Safety
 * `env` must come from [`capex_env_create`]; `out_state` valid for writes.
 */
enum CapexStatus capex_env_state(const struct CapexEnv *env, struct CapexState *out_state);

/**
 * Adds `decision` units at the current state. Infeasible decisions and
 * steps after the final stage leave the environment unchanged.
 *
 * # Safety
 * `env` must come from [`capex_env_create`]; the output pointers must be
 * valid for writes.
 */
enum CapexStatus capex_env_step(struct CapexEnv *env,
                                uint32_t decision,
                                double *out_reward,
                                struct CapexState *out_state,
                                bool *out_terminal);

/**
 * Releases an environment; null is ignored.
 *
 * # Safety
 * `env` must be null or come from [`capex_env_create`] and not be used
 * afterwards.
 */
void capex_env_free(struct CapexEnv *env);

/**
 * Last-stage investment threshold `(c_om + c_inv) / u` of a price-only
 * configuration.
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` valid for writes.
 */
enum CapexStatus capex_two_stage_threshold(const char *config_text, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAPEX_H */
