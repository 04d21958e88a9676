#ifndef CHEMOTAXIS_H
#define CHEMOTAXIS_H

/* Generated from the Rust sources by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every entry point.
 */
typedef enum ChxStatus {
  CHX_STATUS_OK = 0,
  CHX_STATUS_NULL_POINTER = 1,
  CHX_STATUS_INVALID_ARGUMENT = 2,
  CHX_STATUS_CONFIG_ERROR = 3,
  CHX_STATUS_SOLVER_ERROR = 4,
  CHX_STATUS_IO_ERROR = 5,
  CHX_STATUS_CHECK_FAILED = 6,
  CHX_STATUS_PANIC = 7,
} ChxStatus;

/**
 * Parsed and validated run configuration.
 */
typedef struct ChxConfig ChxConfig;

/**
 * Stored solution of one run.
 */
typedef struct ChxTrajectory ChxTrajectory;

/**
 * Worst-case quantities over all accepted steps of a run.
 */
typedef struct ChxDiagnostics {
  size_t steps;
  double min_dt;
  double max_dt;
  double min_u;
  double lower_bound_ratio;
  double max_sup_increase;
  /**
   * 1 when positivity, the signal floor and sup-norm monotonicity held.
   */
  int32_t invariants_hold;
} ChxDiagnostics;

/**
 * Bound constants for the configured data and horizon.
 */
typedef struct ChxBounds {
  double c[11];
  double poincare;
} ChxBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses TOML configuration text into a new handle.
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` valid for writes.
 */
enum ChxStatus chx_config_parse(const char *config_text, struct ChxConfig **out);

/**
 * Reads a configuration file; relative profile paths resolve against its
 * directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum ChxStatus chx_config_load(const char *path, struct ChxConfig **out);

/**
 * Releases a configuration; null is ignored.
 *
 * # Safety
 * `cfg` must be null or a handle from this library not freed before.
 */
void chx_config_free(struct ChxConfig *cfg);

/**
 * Integrates the configured problem.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid for writes.
 */
enum ChxStatus chx_run(const struct ChxConfig *cfg, struct ChxTrajectory **out);

/**
 * Releases a trajectory; null is ignored.
 *
 * # Safety
 * `traj` must be null or a handle from this library not freed before.
 */
void chx_trajectory_free(struct ChxTrajectory *traj);

/**
 * Number of stored snapshots, the initial data included.
 *
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum ChxStatus chx_trajectory_snapshot_count(const struct ChxTrajectory *traj, size_t *out);

/**
 * Number of cells, the length of every field.
 *
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum ChxStatus chx_trajectory_cell_count(const struct ChxTrajectory *traj, size_t *out);

/**
 * Copies snapshot `index` into `time`, `u` and `v`; the field buffers
 * hold `len` doubles, which must equal the cell count. Either buffer may
 * be null to skip it.
 *
 * # Safety
 * `traj` must be a live handle, `time` valid for writes and non-null
 * buffers valid for `len` writes.
 */
enum ChxStatus chx_trajectory_snapshot(const struct ChxTrajectory *traj,
                                       size_t index,
                                       double *time,
                                       double *u,
                                       double *v,
                                       size_t len);

/**
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum ChxStatus chx_trajectory_diagnostics(const struct ChxTrajectory *traj,
                                          struct ChxDiagnostics *out);

/**
 * Final-time residual of the log-mass identity.
 *
 * # Safety
 * `traj` must be a live handle and `out` valid for writes.
 */
enum ChxStatus chx_log_mass_residual(const struct ChxTrajectory *traj, double *out);

/**
 * Bound constants for the configured initial data and horizon.
 *
 * # Safety
 * `cfg` must be a live handle and `out` valid for writes.
 */
enum ChxStatus chx_bounds(const struct ChxConfig *cfg, struct ChxBounds *out);

/**
 * Checks the final estimate ledger of `traj` against the constants of
 * `cfg`; `CHX_STATUS_CHECK_FAILED` when any inequality is violated.
 *
 * # Safety
 * Both handles must be live.
 */
enum ChxStatus chx_check_estimates(const struct ChxConfig *cfg, const struct ChxTrajectory *traj);

/**
 * Weak-form audit of `traj` with the suite configured in `cfg`;
 * `CHX_STATUS_CHECK_FAILED` when any residual is out of tolerance.
 *
 * # Safety
 * Both handles must be live.
 */
enum ChxStatus chx_audit(const struct ChxConfig *cfg, const struct ChxTrajectory *traj);

/**
 * Spatially uniform solution at time `t`; `eps = 0` gives the
 * unregularized limit.
 *
 * # Safety
 * `u_out` and `v_out` must be valid for writes.
 */
enum ChxStatus chx_ode_oracle(double u0,
                              double v0,
                              double kappa,
                              double mu,
                              double eps,
                              double t,
                              double *u_out,
                              double *v_out);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`) and returns the byte length the
 * full message needs including the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` writes.
 */
size_t chx_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHEMOTAXIS_H */
