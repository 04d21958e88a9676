//! C ABI over `chemotaxis-core`.
//!
//! Every function returns a [`ChxStatus`]; on failure the message is kept
//! per thread and can be copied out with [`chx_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.
//! Panics never cross the boundary; they surface as `CHX_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use chemotaxis_core::config::{load_config, parse_config, RunConfig};
use chemotaxis_core::convergence::ode_oracle_eps;
use chemotaxis_core::estimates::{bounds_from_data, check, log_mass_identity_residual};
use chemotaxis_core::stepper::Trajectory;
use chemotaxis_core::weakform::audit;
use chemotaxis_core::Error;

/// Result code of every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    SolverError = 4,
    IoError = 5,
    CheckFailed = 6,
    Panic = 7,
}

/// Parsed and validated run configuration.
pub struct ChxConfig(RunConfig);

/// Stored solution of one run.
pub struct ChxTrajectory(Trajectory);

/// Bound constants for the configured data and horizon.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChxBounds {
    pub c: [f64; 11],
    pub poincare: f64,
}

/// Worst-case quantities over all accepted steps of a run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChxDiagnostics {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    pub min_u: f64,
    pub lower_bound_ratio: f64,
    pub max_sup_increase: f64,
    /// 1 when positivity, the signal floor and sup-norm monotonicity held.
    pub invariants_hold: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(ChxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::ConfigParse { .. }
            | Error::ConfigInvalid(_)
            | Error::InvalidParams(_)
            | Error::InvalidGrid(_)
            | Error::InvalidInitialData(_)
            | Error::TestFunction(_) => ChxStatus::ConfigError,
            Error::NonPositiveSignal { .. } | Error::InvariantBreach { .. } | Error::StepCollapse { .. } => {
                ChxStatus::SolverError
            }
            Error::Io(_) | Error::Csv(_) | Error::Snapshot { .. } => ChxStatus::IoError,
            Error::Quadrature(_) | Error::Sweep(_) => ChxStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(ChxStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> ChxStatus {
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|payload| {
        let msg = payload
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| payload.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "unknown panic".into());
        Err(Failure(ChxStatus::Panic, format!("panic: {msg}")))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| e.borrow_mut().clear());
            ChxStatus::Ok
        }
        Err(Failure(status, msg)) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = msg);
            status
        }
    }
}

/// # Safety
/// `p` must be null or valid for reads of `T`.
unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or valid for writes of `T`.
unsafe fn put<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

/// # Safety
/// `s` must be null or a NUL-terminated string.
unsafe fn text<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(ChxStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Parses TOML configuration text into a new handle.
///
/// # Safety
/// `config_text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_config_parse(config_text: *const c_char, out: *mut *mut ChxConfig) -> ChxStatus {
    guard(|| {
        let cfg = parse_config(text(config_text, "config_text")?)?;
        put(out, Box::into_raw(Box::new(ChxConfig(cfg))), "out")
    })
}

/// Reads a configuration file; relative profile paths resolve against its
/// directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_config_load(path: *const c_char, out: *mut *mut ChxConfig) -> ChxStatus {
    guard(|| {
        let cfg = load_config(Path::new(text(path, "path")?))?;
        put(out, Box::into_raw(Box::new(ChxConfig(cfg))), "out")
    })
}

/// Releases a configuration; null is ignored.
///
/// # Safety
/// `cfg` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn chx_config_free(cfg: *mut ChxConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Integrates the configured problem.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_run(cfg: *const ChxConfig, out: *mut *mut ChxTrajectory) -> ChxStatus {
    guard(|| {
        let cfg = get(cfg, "cfg")?;
        let traj = cfg.0.scenario().run()?;
        put(out, Box::into_raw(Box::new(ChxTrajectory(traj))), "out")
    })
}

/// Releases a trajectory; null is ignored.
///
/// # Safety
/// `traj` must be null or a handle from this library not freed before.
#[no_mangle]
pub unsafe extern "C" fn chx_trajectory_free(traj: *mut ChxTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Number of stored snapshots, the initial data included.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_trajectory_snapshot_count(traj: *const ChxTrajectory, out: *mut usize) -> ChxStatus {
    guard(|| put(out, get(traj, "traj")?.0.snapshots.len(), "out"))
}

/// Number of cells, the length of every field.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_trajectory_cell_count(traj: *const ChxTrajectory, out: *mut usize) -> ChxStatus {
    guard(|| put(out, get(traj, "traj")?.0.grid.total_cells(), "out"))
}

/// Copies snapshot `index` into `time`, `u` and `v`; the field buffers
/// hold `len` doubles, which must equal the cell count. Either buffer may
/// be null to skip it.
///
/// # Safety
/// `traj` must be a live handle, `time` valid for writes and non-null
/// buffers valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn chx_trajectory_snapshot(
    traj: *const ChxTrajectory,
    index: usize,
    time: *mut f64,
    u: *mut f64,
    v: *mut f64,
    len: usize,
) -> ChxStatus {
    guard(|| {
        let traj = &get(traj, "traj")?.0;
        let snap = traj.snapshots.get(index).ok_or_else(|| {
            Failure(
                ChxStatus::InvalidArgument,
                format!("snapshot index {index} out of range ({} stored)", traj.snapshots.len()),
            )
        })?;
        if len != snap.u.len() {
            return Err(Failure(
                ChxStatus::InvalidArgument,
                format!("buffer length {len} differs from the cell count {}", snap.u.len()),
            ));
        }
        put(time, snap.t, "time")?;
        for (dst, field) in [(u, &snap.u), (v, &snap.v)] {
            if !dst.is_null() {
                ptr::copy_nonoverlapping(field.values().as_ptr(), dst, len);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_trajectory_diagnostics(traj: *const ChxTrajectory, out: *mut ChxDiagnostics) -> ChxStatus {
    guard(|| {
        let d = &get(traj, "traj")?.0.diagnostics;
        let diag = ChxDiagnostics {
            steps: d.steps,
            min_dt: d.min_dt,
            max_dt: d.max_dt,
            min_u: d.min_u,
            lower_bound_ratio: d.lower_bound_ratio,
            max_sup_increase: d.max_sup_increase,
            invariants_hold: d.invariants_hold() as i32,
        };
        put(out, diag, "out")
    })
}

/// Final-time residual of the log-mass identity.
///
/// # Safety
/// `traj` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_log_mass_residual(traj: *const ChxTrajectory, out: *mut f64) -> ChxStatus {
    guard(|| put(out, log_mass_identity_residual(&get(traj, "traj")?.0), "out"))
}

/// Bound constants for the configured initial data and horizon.
///
/// # Safety
/// `cfg` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_bounds(cfg: *const ChxConfig, out: *mut ChxBounds) -> ChxStatus {
    guard(|| {
        let cfg = &get(cfg, "cfg")?.0;
        let (g, u0, v0) = cfg.scenario().build()?;
        let b = bounds_from_data(&u0, &v0, &cfg.model, &g, cfg.model.t_end)?;
        let c = [b.c1, b.c2, b.c3, b.c4, b.c5, b.c6, b.c7, b.c8, b.c9, b.c10, b.c11];
        put(
            out,
            ChxBounds {
                c,
                poincare: b.poincare_cp,
            },
            "out",
        )
    })
}

/// Checks the final estimate ledger of `traj` against the constants of
/// `cfg`; `CHX_STATUS_CHECK_FAILED` when any inequality is violated.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn chx_check_estimates(cfg: *const ChxConfig, traj: *const ChxTrajectory) -> ChxStatus {
    guard(|| {
        let cfg = &get(cfg, "cfg")?.0;
        let traj = &get(traj, "traj")?.0;
        let (u0, v0) = (&traj.initial().u, &traj.initial().v);
        let b = bounds_from_data(u0, v0, &cfg.model, &traj.grid, cfg.model.t_end)?;
        let report = check(&traj.ledger.row(), &b, traj.grid.max_spacing())?;
        match report.entries.iter().find(|e| !e.pass) {
            None => Ok(()),
            Some(e) => Err(Failure(
                ChxStatus::CheckFailed,
                format!("{} violated: {} > {}", e.lemma_id, e.value, e.bound),
            )),
        }
    })
}

/// Weak-form audit of `traj` with the suite configured in `cfg`;
/// `CHX_STATUS_CHECK_FAILED` when any residual is out of tolerance.
///
/// # Safety
/// Both handles must be live.
#[no_mangle]
pub unsafe extern "C" fn chx_audit(cfg: *const ChxConfig, traj: *const ChxTrajectory) -> ChxStatus {
    guard(|| {
        let cfg = &get(cfg, "cfg")?.0;
        let traj = &get(traj, "traj")?.0;
        let suite = cfg.suite(&traj.grid)?;
        let report = audit(traj, &suite, cfg.audit.tol_factor)?;
        match report.entries.iter().find(|e| !e.pass) {
            None => Ok(()),
            Some(e) => Err(Failure(
                ChxStatus::CheckFailed,
                format!("{} ({}) out of tolerance {}", e.testfn_id, e.mode.as_str(), e.tol),
            )),
        }
    })
}

/// Spatially uniform solution at time `t`; `eps = 0` gives the
/// unregularized limit.
///
/// # Safety
/// `u_out` and `v_out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn chx_ode_oracle(
    u0: f64,
    v0: f64,
    kappa: f64,
    mu: f64,
    eps: f64,
    t: f64,
    u_out: *mut f64,
    v_out: *mut f64,
) -> ChxStatus {
    guard(|| {
        if u_out.is_null() || v_out.is_null() {
            return Err(null("output pointer"));
        }
        let (u, v) = ode_oracle_eps(u0, v0, kappa, mu, eps, t)?;
        put(u_out, u, "u_out")?;
        put(v_out, v, "v_out")
    })
}

/// Copies the calling thread's last error message into `buf` (truncated,
/// always NUL-terminated when `len > 0`) and returns the byte length the
/// full message needs including the terminator.
///
/// # Safety
/// `buf` must be null or valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn chx_last_error_message(buf: *mut c_char, len: usize) -> usize {
    catch_unwind(|| {
        LAST_ERROR.with(|e| {
            let msg = e.borrow();
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len() + 1
        })
    })
    .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, ChxStatus::Panic);
        let mut buf = [0 as c_char; 64];
        let needed = unsafe { chx_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let msg = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
        assert_eq!(msg, "panic: boom");
        assert_eq!(needed, msg.len() + 1);
    }

    #[test]
    fn success_clears_the_message() {
        guard(|| Err(null("x")));
        assert!(unsafe { chx_last_error_message(ptr::null_mut(), 0) } > 1);
        guard(|| Ok(()));
        assert_eq!(unsafe { chx_last_error_message(ptr::null_mut(), 0) }, 1);
    }

    #[test]
    fn error_classes() {
        let status = |e: Error| Failure::from(e).0;
        assert_eq!(status(Error::ConfigInvalid("x".into())), ChxStatus::ConfigError);
        assert_eq!(status(Error::StepCollapse { t: 0.0, dt: 0.0 }), ChxStatus::SolverError);
        assert_eq!(
            status(Error::Snapshot {
                offset: 0,
                message: "x".into()
            }),
            ChxStatus::IoError
        );
    }
}
