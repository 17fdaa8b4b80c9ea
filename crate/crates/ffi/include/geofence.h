/* Generated by cbindgen. Do not edit. */

#ifndef GEOFENCE_H
#define GEOFENCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  GF_STATUS_OK = 0,
  GF_STATUS_NULL_POINTER = 1,
  GF_STATUS_INVALID_ARGUMENT = 2,
  GF_STATUS_OUT_OF_RANGE = 3,
  GF_STATUS_VALIDATION = 4,
  GF_STATUS_PARSE = 5,
  GF_STATUS_IO = 6,
  GF_STATUS_MODEL = 7,
  GF_STATUS_CONFIG = 8,
  GF_STATUS_TOO_LARGE = 9,
  GF_STATUS_PANIC = 10,
} GfStatus;

typedef enum {
  GF_MODE_POLLUTING = 0,
  GF_MODE_ELECTRIC = 1,
} GfMode;

/**
 * Control modes for [`GfControllerConfig::mode`].
 */
typedef enum {
  GF_CONTROL_MODE_OFF = 0,
  GF_CONTROL_MODE_GEOFENCE = 1,
  GF_CONTROL_MODE_SINGLE_VEHICLE = 2,
} GfControlMode;

typedef enum {
  GF_POWERTRAIN_HYBRID = 0,
  GF_POWERTRAIN_PURE_EV = 1,
  GF_POWERTRAIN_PURE_ICE = 2,
} GfPowertrain;

/**
 * Solution of a problem: x per vehicle, in the order entries were added.
 */
typedef struct GfAssignment GfAssignment;

/**
 * Per-class emission coefficients.
 */
typedef struct GfCoefficientTable GfCoefficientTable;

/**
 * A stateful coordinator with its own coin-toss stream.
 */
typedef struct GfCoordinator GfCoordinator;

/**
 * Accumulates entries for one optimization problem.
 */
typedef struct GfProblemBuilder GfProblemBuilder;

/**
 * A loaded scenario.
 */
typedef struct GfScenario GfScenario;

/**
 * The recorded output of one run.
 */
typedef struct GfTrace GfTrace;

/**
 * Polynomial coefficients for one class and pollutant (rate in g/km).
 */
typedef struct {
  double k;
  double a;
  double b;
  double c;
  double d;
  double e;
  double f;
  double g;
} GfCoefficients;

/**
 * One simulation step of a trace.
 */
typedef struct {
  double sim_time;
  /**
   * Nonzero when at least one fence was active.
   */
  uint8_t fence_active;
  size_t member_count;
  size_t vehicle_count;
  size_t polluting_count;
  double in_fence_rate;
  double out_of_fence_rate;
  double total_rate;
  double budget;
} GfTraceRow;

typedef struct {
  double tau_s;
  double switch_interval_s;
  double expiry_timeout_s;
  double allowable_limit_g_per_min;
  double actuation_latency_s;
  double radius_m;
  uint8_t force_detector_electric;
  /**
   * A [`GfControlMode`] value.
   */
  uint8_t mode;
} GfControllerConfig;

/**
 * A vehicle as reported to the coordinator.
 */
typedef struct {
  uint32_t id;
  double x;
  double y;
  double speed_kmh;
  uint8_t euro_class;
  /**
   * A [`GfPowertrain`] value.
   */
  uint8_t powertrain;
  /**
   * Edge the vehicle is on; NULL means unknown (density 1.0).
   */
  const char *edge_id;
} GfVehicle;

/**
 * A mode command produced by the coordinator.
 */
typedef struct {
  uint32_t vehicle_id;
  GfMode mode;
  double issued_at;
  double effective_at;
} GfCommand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *gf_last_error_message(void);

/**
 * Library version string (static).
 */
const char *gf_version(void);

GfProblemBuilder *gf_problem_builder_new(double limit_g_per_min);

/**
 * # Safety
 * `builder` must come from [`gf_problem_builder_new`].
 */
GfStatus gf_problem_builder_add(GfProblemBuilder *builder,
                                uint32_t vehicle_id,
                                double density,
                                double emission_g_per_min);

/**
 * # Safety
 * `builder` must come from [`gf_problem_builder_new`] or be NULL.
 */
void gf_problem_builder_free(GfProblemBuilder *builder);

/**
 * Greedy solve. On success `*out` owns a new assignment.
 *
 * # Safety
 * `builder` must be valid; `out` must point to writable storage.
 */
GfStatus gf_solve(const GfProblemBuilder *builder, GfAssignment **out);

/**
 * Exhaustive reference solve for small problems.
 *
 * # Safety
 * As [`gf_solve`].
 */
GfStatus gf_brute_force_solve(const GfProblemBuilder *builder, GfAssignment **out);

/**
 * # Safety
 * `a` must be a valid assignment or NULL (returns 0).
 */
size_t gf_assignment_len(const GfAssignment *a);

/**
 * # Safety
 * `a` must be valid; `vehicle_id` and `x` must be writable.
 */
GfStatus gf_assignment_get(const GfAssignment *a, size_t index, uint32_t *vehicle_id, double *x);

/**
 * # Safety
 * `a` must be a valid assignment or NULL (returns NaN).
 */
double gf_assignment_objective(const GfAssignment *a);

/**
 * Expected emission `sum x_i e_i` in g/min.
 *
 * # Safety
 * `a` must be a valid assignment or NULL (returns NaN).
 */
double gf_assignment_expected_emission(const GfAssignment *a);

/**
 * # Safety
 * `a` must come from a solve call or be NULL.
 */
void gf_assignment_free(GfAssignment *a);

/**
 * Emission rate in g/min for explicit coefficients at `speed_kmh`.
 *
 * # Safety
 * `coeffs` must be valid; `out` must be writable.
 */
GfStatus gf_emission_rate_g_per_min(const GfCoefficients *coeffs, double speed_kmh, double *out);

/**
 * The table shipped with the library.
 */
GfCoefficientTable *gf_table_bundled(void);

/**
 * # Safety
 * `path` must be a valid string; `out` must be writable.
 */
GfStatus gf_table_load(const char *path, GfCoefficientTable **out);

/**
 * CO rate in g/min for a EURO class (1 to 4) at `speed_kmh`.
 *
 * # Safety
 * `table` must be valid; `out` must be writable.
 */
GfStatus gf_table_rate_g_per_min(const GfCoefficientTable *table,
                                 uint8_t euro_class,
                                 double speed_kmh,
                                 double *out);

/**
 * # Safety
 * `table` must come from this library or be NULL.
 */
void gf_table_free(GfCoefficientTable *table);

/**
 * # Safety
 * `path` must be a valid string; `out` must be writable.
 */
GfStatus gf_scenario_load(const char *path, GfScenario **out);

/**
 * # Safety
 * `s` must come from [`gf_scenario_load`] or be NULL.
 */
void gf_scenario_free(GfScenario *s);

/**
 * Runs a scenario. With `control == 0` the controller is switched off.
 *
 * # Safety
 * `scenario` must be valid; `out` must be writable.
 */
GfStatus gf_run(const GfScenario *scenario, uint64_t seed, uint8_t control, GfTrace **out);

/**
 * Number of rows (steps), or 0 for NULL.
 *
 * # Safety
 * `trace` must be valid or NULL.
 */
size_t gf_trace_len(const GfTrace *trace);

/**
 * Number of command-log entries, or 0 for NULL.
 *
 * # Safety
 * `trace` must be valid or NULL.
 */
size_t gf_trace_command_count(const GfTrace *trace);

/**
 * # Safety
 * `trace` must be valid; `out` must be writable.
 */
GfStatus gf_trace_row(const GfTrace *trace, size_t index, GfTraceRow *out);

/**
 * Mean in-fence emission rate over steps with an active fence.
 *
 * # Safety
 * `trace` must be valid or NULL (returns NaN).
 */
double gf_trace_mean_in_fence_rate(const GfTrace *trace);

/**
 * Writes `trace.csv`, `commands.csv` and `vehicles.csv` into `dir`.
 *
 * # Safety
 * `trace` and `dir` must be valid.
 */
GfStatus gf_trace_write(const GfTrace *trace, const char *dir);

/**
 * # Safety
 * `trace` must come from [`gf_run`] or be NULL.
 */
void gf_trace_free(GfTrace *trace);

/**
 * Fills `out` with the default configuration.
 *
 * # Safety
 * `out` must be writable.
 */
GfStatus gf_controller_config_default(GfControllerConfig *out);

/**
 * Creates a coordinator. `table` may be NULL for the bundled table; it is
 * copied, so the caller keeps ownership.
 *
 * # Safety
 * `config` must be valid; `table` valid or NULL; `out` writable.
 */
GfStatus gf_coordinator_new(const GfControllerConfig *config,
                            const GfCoefficientTable *table,
                            uint64_t seed,
                            GfCoordinator **out);

/**
 * Sets the cyclist density weight (>= 1) for an edge.
 *
 * # Safety
 * `coord` and `edge_id` must be valid.
 */
GfStatus gf_coordinator_set_density(GfCoordinator *coord, const char *edge_id, double weight);

/**
 * Reports a cyclist detection by vehicle `detector` at (`x`, `y`).
 *
 * # Safety
 * `coord` and `cyclist_id` must be valid.
 */
GfStatus gf_coordinator_on_detection(GfCoordinator *coord,
                                     const char *cyclist_id,
                                     uint32_t detector,
                                     double x,
                                     double y,
                                     double now);

/**
 * Removes fences idle for longer than the timeout.
 *
 * # Safety
 * `coord` must be valid.
 */
GfStatus gf_coordinator_expire(GfCoordinator *coord, double now);

/**
 * One control tick over the current fleet with the measured background
 * level (g/min). Results are read with [`gf_coordinator_command`].
 *
 * # Safety
 * `coord` must be valid; `vehicles` must point to `count` entries.
 */
GfStatus gf_coordinator_tick(GfCoordinator *coord,
                             double now,
                             const GfVehicle *vehicles,
                             size_t count,
                             double background_level);

/**
 * Number of commands produced by the last detection, expire or tick call.
 *
 * # Safety
 * `coord` must be valid or NULL.
 */
size_t gf_coordinator_command_count(const GfCoordinator *coord);

/**
 * # Safety
 * `coord` must be valid; `out` writable.
 */
GfStatus gf_coordinator_command(const GfCoordinator *coord, size_t index, GfCommand *out);

/**
 * Number of live fences.
 *
 * # Safety
 * `coord` must be valid or NULL.
 */
size_t gf_coordinator_fence_count(const GfCoordinator *coord);

/**
 * Writes the full command log as CSV to `path`.
 *
 * # Safety
 * `coord` and `path` must be valid.
 */
GfStatus gf_coordinator_write_command_log(const GfCoordinator *coord, const char *path);

/**
 * # Safety
 * `coord` must come from [`gf_coordinator_new`] or be NULL.
 */
void gf_coordinator_free(GfCoordinator *coord);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOFENCE_H */
