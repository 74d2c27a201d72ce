#ifndef ANTIJAM_H
#define ANTIJAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define AJ_OK 0

#define AJ_ERR_USAGE 1

#define AJ_ERR_INVALID 2

#define AJ_ERR_RUNTIME 3

/**
 * Per-slot metrics of one finished episode.
 */
typedef struct AjMetrics AjMetrics;

/**
 * An owned scenario configuration.
 */
typedef struct AjScenario AjScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *aj_last_error(void);

/**
 * Library version as a static string.
 */
const char *aj_version(void);

/**
 * Builds a built-in scenario ("apartment" or "office"); null if unknown.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string.
 */
struct AjScenario *aj_scenario_builtin(const char *name);

/**
 * Loads and validates a scenario file; null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct AjScenario *aj_scenario_load(const char *path);

/**
 * Parses a scenario from TOML text; null on failure.
 *
 * # Safety
 * `text` must be a valid NUL-terminated string.
 */
struct AjScenario *aj_scenario_from_toml(const char *text);

/**
 * # Safety
 * `sc` must come from an `aj_scenario_*` constructor and not be freed twice.
 */
void aj_scenario_free(struct AjScenario *sc);

/**
 * # Safety
 * `sc` must be a live scenario handle.
 */
int aj_scenario_set_seed(struct AjScenario *sc, uint64_t seed);

/**
 * # Safety
 * `sc` must be a live scenario handle.
 */
int aj_scenario_set_slots(struct AjScenario *sc, uintptr_t slots);

/**
 * Selects the defender: "greedy", "qlearn", "dqn", or "fastdqn".
 *
 * # Safety
 * `sc` must be a live scenario handle; `agent` a valid string.
 */
int aj_scenario_set_agent(struct AjScenario *sc, const char *agent);

/**
 * Runs one episode with the scenario's agent and seed; null on failure.
 * The fast DQN is hotbooted first when the scenario enables it.
 *
 * # Safety
 * `sc` must be a live scenario handle.
 */
struct AjMetrics *aj_run_episode(const struct AjScenario *sc);

/**
 * # Safety
 * `m` must come from `aj_run_episode` and not be freed twice.
 */
void aj_metrics_free(struct AjMetrics *m);

/**
 * Number of recorded slots (one row per slot).
 *
 * # Safety
 * `m` must be a live metrics handle.
 */
uintptr_t aj_metrics_len(const struct AjMetrics *m);

/**
 * SINR at slot `i` (NaN when out of range).
 *
 * # Safety
 * `m` must be a live metrics handle.
 */
double aj_metrics_sinr(const struct AjMetrics *m, uintptr_t i);

/**
 * Utility at slot `i` (NaN when out of range).
 *
 * # Safety
 * `m` must be a live metrics handle.
 */
double aj_metrics_utility(const struct AjMetrics *m, uintptr_t i);

/**
 * Strategy index taken at slot `i` (-1 when out of range).
 *
 * # Safety
 * `m` must be a live metrics handle.
 */
int aj_metrics_action(const struct AjMetrics *m, uintptr_t i);

/**
 * 1 when the device moved at slot `i`, 0 otherwise (-1 out of range).
 *
 * # Safety
 * `m` must be a live metrics handle.
 */
int aj_metrics_moved(const struct AjMetrics *m, uintptr_t i);

/**
 * 1 when the device stayed silent at slot `i`, 0 otherwise (-1 out of range).
 *
 * # Safety
 * `m` must be a live metrics handle.
 */
int aj_metrics_silent(const struct AjMetrics *m, uintptr_t i);

/**
 * Mean SINR and utility over the last `last` slots; returns a status code.
 *
 * # Safety
 * `m` must be a live metrics handle; out pointers must be writable or null.
 */
int aj_metrics_summary(const struct AjMetrics *m,
                       uintptr_t last,
                       double *sinr_mean,
                       double *utility_mean);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANTIJAM_H */
