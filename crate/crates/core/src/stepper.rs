//! Positivity-preserving first-order IMEX splitting.
//!
//! One step runs three substeps in order:
//!
//! 1. explicit donor-cell advection of `u` by the chemotactic flux,
//! 2. pointwise reactions: a Patankar update for the logistic term and a
//!    frozen-denominator update for signal consumption,
//! 3. backward-Euler diffusion of both fields, one tridiagonal sweep per
//!    axis (ADI in 2D).
//!
//! Each substep keeps `u ≥ 0` and `v > 0` on its own, the advection one
//! under the step bound from [`admissible_dt`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimates::{EstimateLedger, LedgerRow};
use crate::grid::{divergence, Field, Grid};
use crate::model::{chemotactic_flux, consumption_rate, harmonic_mean, ModelParams, State};
use crate::tridiag::NeumannLine;

/// Steps below this fraction of the horizon abort the run.
pub const DT_FLOOR_FRACTION: f64 = 1e-12;

/// Relative slack allowed below `inf v₀ · e^{-t/ε}`.
pub const LOWER_BOUND_SLACK: f64 = 1e-8;

/// Largest per-step growth of `max v` still counted as nonincreasing.
pub const SUP_INCREASE_TOL: f64 = 1e-12;

/// Time-step controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    pub dt_max: f64,
    /// Fraction of the positivity limit actually used, in (0, 1].
    pub cfl_safety: f64,
    /// Spacing of stored snapshots.
    pub snapshot_every: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt_max: 1e-3,
            cfl_safety: 0.5,
            snapshot_every: 1e-2,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(Error::InvalidParams(format!("dt_max = {} must be > 0", self.dt_max)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.snapshot_every > 0.0) || !self.snapshot_every.is_finite() {
            return Err(Error::InvalidParams(format!(
                "snapshot_every = {} must be > 0",
                self.snapshot_every
            )));
        }
        Ok(())
    }
}

/// Largest outflow rate (1/time) of any cell under donor-cell advection.
///
/// Cell `i` loses at most `dt · rate_i · u_i` per step, where `rate_i` sums
/// `χ|∇v| / (v̄ (1+εu_i) h)` over the faces whose velocity points out of it.
pub fn max_outflow_rate(state: &State, p: &ModelParams, g: &Grid) -> f64 {
    if p.chi == 0.0 {
        return 0.0;
    }
    let (u, v) = (state.u.values(), state.v.values());
    let mut rate = vec![0.0; g.total_cells()];
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        g.for_each_interior_face(axis, |_, l, r| {
            let grad = (v[r] - v[l]) / h;
            if grad == 0.0 {
                return;
            }
            let speed = p.chi * grad.abs() / harmonic_mean(v[l], v[r]) / h;
            let donor = if grad > 0.0 { l } else { r };
            rate[donor] += speed / (1.0 + p.eps * u[donor]);
        });
    }
    rate.into_iter().fold(0.0, f64::max)
}

/// Step size that keeps the advection substep positivity-preserving,
/// capped by `dt_max` and by the time remaining until `p.t_end`.
pub fn admissible_dt(state: &State, p: &ModelParams, g: &Grid, cfg: &StepConfig) -> f64 {
    let remaining = (p.t_end - state.t).max(0.0);
    cfl_dt(state, p, g, cfg).min(remaining)
}

/// Positivity bound capped by `dt_max`, ignoring the horizon.
fn cfl_dt(state: &State, p: &ModelParams, g: &Grid, cfg: &StepConfig) -> f64 {
    let rate = max_outflow_rate(state, p, g);
    if rate > 0.0 {
        (cfg.cfl_safety / rate).min(cfg.dt_max)
    } else {
        cfg.dt_max
    }
}

/// Backward-Euler diffusion `(I - dt Δ) f_new = f`, axis by axis.
pub fn implicit_diffusion(f: &mut Field, g: &Grid, dt: f64) {
    let (nx, ny) = (g.cells(0), g.cells(1));
    let data = f.values_mut();
    let line_x = NeumannLine::new(nx, dt / g.spacing(0).powi(2));
    for j in 0..ny {
        line_x.solve_strided(data, j, ny);
    }
    if g.dim() == 2 {
        let line_y = NeumannLine::new(ny, dt / g.spacing(1).powi(2));
        for row in data.chunks_exact_mut(ny) {
            line_y.solve(row);
        }
    }
}

/// Advances `state` by `dt`.
///
/// Fails with [`Error::InvariantBreach`] if the result has `u < 0`,
/// `v ≤ 0` or non-finite entries, which cannot happen when
/// `dt ≤ admissible_dt`.
pub fn step(state: &State, p: &ModelParams, g: &Grid, dt: f64) -> Result<State> {
    // advection
    let mut u = state.u.clone();
    if p.chi != 0.0 {
        let div = divergence(&chemotactic_flux(state, p, g)?, g);
        for (ui, di) in u.values_mut().iter_mut().zip(div.values()) {
            *ui -= dt * di;
        }
    }

    // reactions; consumption sees the post-advection density
    let mut v = state.v.clone();
    for (ui, vi) in u.values_mut().iter_mut().zip(v.values_mut()) {
        let rate = consumption_rate(*ui, *vi, p.eps);
        *vi /= 1.0 + dt * rate;
        *ui = *ui * (1.0 + dt * p.kappa) / (1.0 + dt * p.mu * *ui);
    }

    implicit_diffusion(&mut u, g, dt);
    implicit_diffusion(&mut v, g, dt);

    let t = state.t + dt;
    if let Some(k) = u.values().iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::InvariantBreach {
            t,
            what: format!("u = {:e} in cell {k}", u.values()[k]),
        });
    }
    if let Some(k) = v.values().iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvariantBreach {
            t,
            what: format!("v = {:e} in cell {k}", v.values()[k]),
        });
    }
    Ok(State { u, v, t })
}

/// Worst-case quantities observed over all accepted steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Smallest positivity-limited step size (capped by `dt_max`) seen
    /// before clipping to snapshot times or the horizon.
    pub min_cfl_dt: f64,
    /// Steps whose size was set by the positivity bound rather than by
    /// `dt_max`, a snapshot time or the horizon.
    pub cfl_limited_steps: usize,
    pub min_u: f64,
    /// Minimum over steps of `min v / (inf v₀ · e^{-t/ε})`; at least one
    /// for an exact discrete lower bound.
    pub lower_bound_ratio: f64,
    /// Largest per-step increase of `max v`; nonpositive when the sup norm
    /// never grows.
    pub max_sup_increase: f64,
}

impl RunDiagnostics {
    fn new(state: &State) -> Self {
        RunDiagnostics {
            steps: 0,
            min_dt: f64::INFINITY,
            max_dt: 0.0,
            min_cfl_dt: f64::INFINITY,
            cfl_limited_steps: 0,
            min_u: state.u.min(),
            lower_bound_ratio: 1.0,
            max_sup_increase: f64::NEG_INFINITY,
        }
    }

    /// `u ≥ 0`, the exponential signal floor and sup-norm monotonicity,
    /// each within its pinned tolerance.
    pub fn invariants_hold(&self) -> bool {
        self.min_u >= 0.0
            && self.lower_bound_ratio >= 1.0 - LOWER_BOUND_SLACK
            && self.max_sup_increase <= SUP_INCREASE_TOL
    }
}

/// Stored solution of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: ModelParams,
    /// Time-ordered; the first entry is the initial data at t = 0.
    pub snapshots: Vec<State>,
    /// Estimate ledger at each snapshot time.
    pub ledger_rows: Vec<LedgerRow>,
    /// Ledger at the final time.
    pub ledger: EstimateLedger,
    pub diagnostics: RunDiagnostics,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &State {
        self.snapshots.last().expect("trajectory has at least one snapshot")
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }
}

/// Integrates from `(u0, v0)` to `p.t_end`.
pub fn run(u0: Field, v0: Field, p: &ModelParams, g: &Grid, cfg: &StepConfig) -> Result<Trajectory> {
    run_observed(u0, v0, p, g, cfg, |_, _, _| {})
}

/// Like [`run`], calling `observer(before, after, dt)` after every
/// accepted step.
pub fn run_observed(
    u0: Field,
    v0: Field,
    p: &ModelParams,
    g: &Grid,
    cfg: &StepConfig,
    mut observer: impl FnMut(&State, &State, f64),
) -> Result<Trajectory> {
    p.validate()?;
    cfg.validate()?;
    for (name, f) in [("u0", &u0), ("v0", &v0)] {
        if f.len() != g.total_cells() || !f.is_finite() {
            return Err(Error::InvalidInitialData(format!(
                "{name} must hold one finite value per cell"
            )));
        }
    }
    if u0.min() < 0.0 {
        return Err(Error::InvalidInitialData(format!("u0 has negative value {}", u0.min())));
    }
    let v_floor = v0.min();
    if !(v_floor > 0.0) {
        return Err(Error::InvalidInitialData(format!(
            "v0 must be positive, min is {v_floor}"
        )));
    }

    let mut state = State::new(u0, v0, 0.0);
    let mut ledger = EstimateLedger::new(&state, g, p);
    let mut diagnostics = RunDiagnostics::new(&state);
    let mut snapshots = vec![state.clone()];
    let mut ledger_rows = vec![ledger.row()];

    let t_end = p.t_end;
    let dt_floor = DT_FLOOR_FRACTION * t_end;
    let mut next_snap_index = 1usize;
    while state.t < t_end {
        let snap_time = (next_snap_index as f64 * cfg.snapshot_every).min(t_end);
        let cfl = cfl_dt(&state, p, g, cfg);
        diagnostics.min_cfl_dt = diagnostics.min_cfl_dt.min(cfl);
        // a step that would round onto or past the target lands on it instead
        let hits_target = state.t + cfl >= snap_time;
        let dt = if hits_target { snap_time - state.t } else { cfl };
        if !hits_target && cfl < dt_floor {
            return Err(Error::StepCollapse { t: state.t, dt: cfl });
        }
        if !hits_target && cfl < cfg.dt_max {
            diagnostics.cfl_limited_steps += 1;
        }
        let mut next = step(&state, p, g, dt)?;
        if hits_target {
            next.t = snap_time;
        }

        ledger.accumulate(&state, &next, dt, g, p);
        record(&mut diagnostics, &state, &next, dt, v_floor, p.eps);
        observer(&state, &next, dt);
        state = next;

        if hits_target {
            snapshots.push(state.clone());
            ledger_rows.push(ledger.row());
            next_snap_index += 1;
        }
    }

    Ok(Trajectory {
        grid: g.clone(),
        params: *p,
        snapshots,
        ledger_rows,
        ledger,
        diagnostics,
    })
}

fn record(d: &mut RunDiagnostics, before: &State, after: &State, dt: f64, v_floor: f64, eps: f64) {
    d.steps += 1;
    d.min_dt = d.min_dt.min(dt);
    d.max_dt = d.max_dt.max(dt);
    d.min_u = d.min_u.min(after.u.min());
    let lower = v_floor * (-after.t / eps).exp();
    if lower > 0.0 {
        d.lower_bound_ratio = d.lower_bound_ratio.min(after.v.min() / lower);
    }
    d.max_sup_increase = d.max_sup_increase.max(after.v.max() - before.v.max());
}
