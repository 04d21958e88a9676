//! Reference solutions and parameter sweeps: the spatially uniform ODE
//! oracle, ε-sweeps with Cauchy differences and grid/time refinement
//! studies with fitted orders.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::ModelParams;
use crate::scenario::{Profile, Scenario};
use crate::stepper::Trajectory;

/// Steps of the classical Runge–Kutta integrator per oracle call.
pub const ORACLE_STEPS: usize = 1_000_000;

/// Closed-form solution of `u' = κu − μu²` at time `t`.
pub fn logistic_solution(u0: f64, kappa: f64, mu: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        u0 / (1.0 + mu * u0 * t)
    } else {
        let g = (kappa * t).exp();
        kappa * u0 * g / (kappa + mu * u0 * (kappa * t).exp_m1())
    }
}

/// `∫₀ᵗ u` for the logistic solution.
pub fn logistic_integral(u0: f64, kappa: f64, mu: f64, t: f64) -> f64 {
    if kappa == 0.0 {
        (mu * u0 * t).ln_1p() / mu
    } else {
        (mu * u0 * (kappa * t).exp_m1() / kappa).ln_1p() / mu
    }
}

fn check_oracle_inputs(u0: f64, v0: f64, kappa: f64, mu: f64, eps: f64, t: f64) -> Result<()> {
    if !(u0 >= 0.0) || !u0.is_finite() {
        return Err(Error::InvalidInitialData(format!(
            "uniform u0 = {u0} must be finite and >= 0"
        )));
    }
    if !(v0 > 0.0) || !v0.is_finite() {
        return Err(Error::InvalidInitialData(format!(
            "uniform v0 = {v0} must be finite and > 0"
        )));
    }
    if !(kappa >= 0.0) || !(mu > 0.0) || !(eps >= 0.0) || !(t >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "oracle needs kappa >= 0, mu > 0, eps >= 0, t >= 0 (got {kappa}, {mu}, {eps}, {t})"
        )));
    }
    Ok(())
}

/// Spatially uniform solution `(u(t), v(t))`, `ε ≥ 0` allowed.
///
/// `u` is the closed-form logistic solution; `v` integrates
/// `v' = −uv/((1+εu)(1+εv))` with [`ORACLE_STEPS`] classical RK4 steps.
pub fn ode_oracle_eps(u0: f64, v0: f64, kappa: f64, mu: f64, eps: f64, t: f64) -> Result<(f64, f64)> {
    check_oracle_inputs(u0, v0, kappa, mu, eps, t)?;
    if t == 0.0 {
        return Ok((u0, v0));
    }
    let h = t / ORACLE_STEPS as f64;
    let rhs = |s: f64, v: f64| {
        let u = logistic_solution(u0, kappa, mu, s);
        -u * v / ((1.0 + eps * u) * (1.0 + eps * v))
    };
    let mut v = v0;
    for k in 0..ORACLE_STEPS {
        let s = k as f64 * h;
        let k1 = rhs(s, v);
        let k2 = rhs(s + 0.5 * h, v + 0.5 * h * k1);
        let k3 = rhs(s + 0.5 * h, v + 0.5 * h * k2);
        let k4 = rhs(s + h, v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok((logistic_solution(u0, kappa, mu, t), v))
}

/// [`ode_oracle_eps`] with the coefficients of `p`.
pub fn ode_oracle(u0: f64, v0: f64, p: &ModelParams, t: f64) -> Result<(f64, f64)> {
    ode_oracle_eps(u0, v0, p.kappa, p.mu, p.eps, t)
}

/// Closed-form `v(t)` of the unregularized uniform system,
/// `v₀ exp(−∫₀ᵗu)`.
pub fn ode_oracle_limit(u0: f64, v0: f64, kappa: f64, mu: f64, t: f64) -> Result<f64> {
    check_oracle_inputs(u0, v0, kappa, mu, 0.0, t)?;
    Ok(v0 * (-logistic_integral(u0, kappa, mu, t)).exp())
}

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    H,
    Dt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub norm_name: String,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub index: usize,
    pub axis_value: f64,
    pub message: String,
}

/// Differences along one axis with least-squares orders per norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    /// One entry per run, strictly monotone.
    pub values: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Slope of `log difference` against `log axis_value` per norm; `None`
    /// with fewer than two positive differences.
    pub orders: Vec<(String, Option<f64>)>,
    pub failures: Vec<RunFailure>,
    /// Step-size cap shared by every run of an ε-sweep.
    pub fixed_dt: Option<f64>,
}

impl SweepResult {
    fn assemble(axis: SweepAxis, values: Vec<f64>, rows: Vec<SweepRow>, failures: Vec<RunFailure>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for r in &rows {
            if !names.contains(&r.norm_name) {
                names.push(r.norm_name.clone());
            }
        }
        let orders = names
            .into_iter()
            .map(|n| {
                let (xs, ys): (Vec<f64>, Vec<f64>) = rows
                    .iter()
                    .filter(|r| r.norm_name == n)
                    .map(|r| (r.axis_value, r.difference))
                    .unzip();
                let order = fit_order(&xs, &ys);
                (n, order)
            })
            .collect();
        SweepResult {
            axis,
            values,
            rows,
            orders,
            failures,
            fixed_dt: None,
        }
    }

    pub fn differences(&self, norm: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.norm_name == norm)
            .map(|r| r.difference)
            .collect()
    }

    pub fn order(&self, norm: &str) -> Option<f64> {
        self.orders.iter().find(|(n, _)| n == norm).and_then(|(_, o)| *o)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["axis_value", "norm_name", "difference", "fitted_order"])?;
        for r in &self.rows {
            let order = self.order(&r.norm_name).unwrap_or(f64::NAN);
            out.write_record([
                crate::fmt_num(r.axis_value),
                r.norm_name.clone(),
                crate::fmt_num(r.difference),
                crate::fmt_num(order),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `ln x` over points with finite
/// positive `y`.
pub fn fit_order(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Trapezoid-in-time norms of `a − b` over shared snapshot times:
/// `(‖u_a − u_b‖_{L¹(Ω×(0,T))}, ‖v_a − v_b‖_{L²(Ω×(0,T))})`.
pub fn space_time_differences(a: &Trajectory, b: &Trajectory) -> Result<(f64, f64)> {
    if a.grid != b.grid || a.times() != b.times() {
        return Err(Error::Sweep("trajectories do not share grid and snapshot times".into()));
    }
    let vol = a.grid.cell_volume();
    let per_snap: Vec<(f64, f64)> = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| {
            let du: f64 = x.u.values().iter().zip(y.u.values()).map(|(p, q)| (p - q).abs()).sum();
            let dv: f64 =
                x.v.values()
                    .iter()
                    .zip(y.v.values())
                    .map(|(p, q)| (p - q).powi(2))
                    .sum();
            (vol * du, vol * dv)
        })
        .collect();
    let (mut u1, mut v2) = (0.0, 0.0);
    for k in 1..per_snap.len() {
        let w = 0.5 * (a.snapshots[k].t - a.snapshots[k - 1].t);
        u1 += w * (per_snap[k].0 + per_snap[k - 1].0);
        v2 += w * (per_snap[k].1 + per_snap[k - 1].1);
    }
    Ok((u1, v2.sqrt()))
}

fn run_all(scenarios: &[Scenario]) -> Vec<Result<Trajectory>> {
    scenarios.par_iter().map(Scenario::run).collect()
}

/// Runs `base` for each ε in `eps` and tabulates Cauchy differences of
/// consecutive runs; a row's `axis_value` is the larger ε of its pair.
///
/// A first adaptive pass finds the smallest positivity-limited step over
/// all ε; the reported pass reruns every ε with that step as `dt_max`, so
/// the differences measure ε-sensitivity rather than step-size noise.
pub fn epsilon_sweep(base: &Scenario, eps: &[f64]) -> Result<SweepResult> {
    if eps.len() < 3 {
        return Err(Error::Sweep(format!(
            "need at least 3 values of eps, got {}",
            eps.len()
        )));
    }
    if eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Sweep(
            "eps values must be positive and strictly decreasing".into(),
        ));
    }
    let with_eps = |e: f64, dt_max: f64| {
        let mut s = base.clone();
        s.model.eps = e;
        s.stepping.dt_max = dt_max;
        s
    };
    let first: Vec<Scenario> = eps.iter().map(|&e| with_eps(e, base.stepping.dt_max)).collect();
    let probe = run_all(&first);
    let min_cfl = probe
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|t| t.diagnostics.min_cfl_dt)
        .fold(f64::INFINITY, f64::min);
    let fixed_dt = if !min_cfl.is_finite() || min_cfl >= base.stepping.dt_max {
        base.stepping.dt_max
    } else {
        0.9 * min_cfl
    };

    let second: Vec<Scenario> = eps.iter().map(|&e| with_eps(e, fixed_dt)).collect();
    let runs = run_all(&second);
    let mut failures = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        if let Err(e) = r {
            failures.push(RunFailure {
                index: i,
                axis_value: eps[i],
                message: e.to_string(),
            });
        }
    }
    let mut rows = Vec::new();
    for j in 0..eps.len() - 1 {
        let (du, dv) = match (&runs[j], &runs[j + 1]) {
            (Ok(a), Ok(b)) => space_time_differences(a, b)?,
            _ => (f64::NAN, f64::NAN),
        };
        rows.push(SweepRow {
            axis_value: eps[j],
            norm_name: "u_l1".into(),
            difference: du,
        });
        rows.push(SweepRow {
            axis_value: eps[j],
            norm_name: "v_l2".into(),
            difference: dv,
        });
    }
    let mut res = SweepResult::assemble(SweepAxis::Epsilon, eps.to_vec(), rows, failures);
    res.fixed_dt = Some(fixed_dt);
    Ok(res)
}

/// How the step cap shrinks with each refinement level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DtScaling {
    /// `dt / 2^ℓ`
    #[default]
    Linear,
    /// `dt / 4^ℓ`
    Quadratic,
}

/// What each level is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The finest level, averaged onto each coarser grid.
    #[default]
    Finest,
    /// [`ode_oracle`]; needs spatially uniform data.
    Oracle,
    /// Exact heat solution; needs `u0 ≡ 0` and a cosine `v0`.
    Heat,
}

/// Block averages of a field on an evenly refined grid.
pub fn restrict(f: &Field, fine: &Grid, coarse: &Grid) -> Result<Field> {
    let ratio: Vec<usize> = (0..2).map(|a| fine.cells(a) / coarse.cells(a)).collect();
    let compatible = fine.dim() == coarse.dim()
        && (0..2).all(|a| ratio[a] >= 1 && coarse.cells(a) * ratio[a] == fine.cells(a))
        && (0..fine.dim()).all(|a| fine.lower(a) == coarse.lower(a) && fine.upper(a) == coarse.upper(a));
    if !compatible {
        return Err(Error::Sweep("grids are not nested".into()));
    }
    let vals = f.values();
    let mut out = vec![0.0; coarse.total_cells()];
    let block = (ratio[0] * ratio[1]) as f64;
    for i in 0..coarse.cells(0) {
        for j in 0..coarse.cells(1) {
            let mut s = 0.0;
            for a in 0..ratio[0] {
                for b in 0..ratio[1] {
                    s += vals[fine.index(i * ratio[0] + a, j * ratio[1] + b)];
                }
            }
            out[coarse.index(i, j)] = s / block;
        }
    }
    Field::new(coarse, out)
}

/// Exact `v(x, t)` for pure diffusion of `offset + A ∏ cos(k_i π (x_i − a_i)/L_i)`.
pub fn heat_solution(v0: &Profile, g: &Grid, t: f64) -> Result<Field> {
    let Profile::Cosine {
        mode,
        amplitude,
        offset,
    } = v0
    else {
        return Err(Error::Sweep("heat reference needs a cosine v0 profile".into()));
    };
    if mode.len() != g.dim() {
        return Err(Error::Sweep("cosine mode does not match the grid dimension".into()));
    }
    let k: Vec<f64> = (0..g.dim())
        .map(|a| mode[a] as f64 * std::f64::consts::PI / g.length(a))
        .collect();
    let decay = (-k.iter().map(|x| x * x).sum::<f64>() * t).exp();
    let lo = [g.lower(0), g.lower(1)];
    Ok(Field::from_fn(g, |x| {
        offset
            + amplitude
                * decay
                * k.iter()
                    .enumerate()
                    .map(|(a, ka)| (ka * (x[a] - lo[a])).cos())
                    .product::<f64>()
    }))
}

/// Runs `levels` levels of `base`, level `ℓ` with `2^ℓ` times the cells
/// per axis and the step cap scaled per `scaling`.
pub fn refinement_study(
    base: &Scenario,
    levels: usize,
    scaling: DtScaling,
    reference: Reference,
) -> Result<SweepResult> {
    if levels < 3 {
        return Err(Error::Sweep(format!("need at least 3 refinement levels, got {levels}")));
    }
    let uniform = (base.u0.uniform_value(), base.v0.uniform_value());
    match reference {
        Reference::Oracle if uniform.0.is_none() || uniform.1.is_none() => {
            return Err(Error::Sweep(
                "oracle reference needs spatially uniform u0 and v0".into(),
            ))
        }
        Reference::Heat if uniform.0 != Some(0.0) || !matches!(base.v0, Profile::Cosine { .. }) => {
            return Err(Error::Sweep("heat reference needs u0 = 0 and a cosine v0".into()))
        }
        _ => {}
    }
    let scenarios: Vec<Scenario> = (0..levels as u32)
        .map(|l| {
            let mut s = base.clone();
            s.grid = base.grid.refined(l);
            let div = match scaling {
                DtScaling::Linear => 2f64.powi(l as i32),
                DtScaling::Quadratic => 4f64.powi(l as i32),
            };
            s.stepping.dt_max = base.stepping.dt_max / div;
            s
        })
        .collect();
    let runs = run_all(&scenarios);
    let grids: Vec<Grid> = scenarios.iter().map(|s| s.grid.build()).collect::<Result<_>>()?;
    let mut failures = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        if let Err(e) = r {
            failures.push(RunFailure {
                index: i,
                axis_value: grids[i].max_spacing(),
                message: e.to_string(),
            });
        }
    }
    let t_end = base.model.t_end;
    let mut rows = Vec::new();
    let (axis, values) = match reference {
        Reference::Oracle => (
            SweepAxis::Dt,
            scenarios.iter().map(|s| s.stepping.dt_max).collect::<Vec<_>>(),
        ),
        _ => (SweepAxis::H, grids.iter().map(Grid::max_spacing).collect()),
    };
    let rel = |x: f64, exact: f64| {
        if exact != 0.0 {
            (x - exact).abs() / exact.abs()
        } else {
            x.abs()
        }
    };
    match reference {
        Reference::Finest => {
            let finest = runs.last().unwrap();
            for l in 0..levels - 1 {
                let (du, dv) = match (&runs[l], finest) {
                    (Ok(a), Ok(f)) => {
                        let fine_grid = &grids[levels - 1];
                        let ur = restrict(&f.last().u, fine_grid, &grids[l])?;
                        let vr = restrict(&f.last().v, fine_grid, &grids[l])?;
                        let vol = grids[l].cell_volume();
                        let du: f64 = a
                            .last()
                            .u
                            .values()
                            .iter()
                            .zip(ur.values())
                            .map(|(p, q)| (p - q).abs())
                            .sum();
                        let dv: f64 = a
                            .last()
                            .v
                            .values()
                            .iter()
                            .zip(vr.values())
                            .map(|(p, q)| (p - q).powi(2))
                            .sum();
                        (vol * du, (vol * dv).sqrt())
                    }
                    _ => (f64::NAN, f64::NAN),
                };
                rows.push(SweepRow {
                    axis_value: values[l],
                    norm_name: "u_l1".into(),
                    difference: du,
                });
                rows.push(SweepRow {
                    axis_value: values[l],
                    norm_name: "v_l2".into(),
                    difference: dv,
                });
            }
        }
        Reference::Oracle => {
            let (u0, v0) = (uniform.0.unwrap(), uniform.1.unwrap());
            let (ue, ve) = ode_oracle(u0, v0, &base.model, t_end)?;
            for (l, r) in runs.iter().enumerate() {
                let (du, dv) = match r {
                    Ok(t) => (
                        t.last().u.values().iter().map(|&x| rel(x, ue)).fold(0.0, f64::max),
                        t.last().v.values().iter().map(|&x| rel(x, ve)).fold(0.0, f64::max),
                    ),
                    Err(_) => (f64::NAN, f64::NAN),
                };
                rows.push(SweepRow {
                    axis_value: values[l],
                    norm_name: "u_rel".into(),
                    difference: du,
                });
                rows.push(SweepRow {
                    axis_value: values[l],
                    norm_name: "v_rel".into(),
                    difference: dv,
                });
            }
        }
        Reference::Heat => {
            for (l, r) in runs.iter().enumerate() {
                let dv = match r {
                    Ok(t) => {
                        let exact = heat_solution(&base.v0, &grids[l], t.last().t)?;
                        let s: f64 = t
                            .last()
                            .v
                            .values()
                            .iter()
                            .zip(exact.values())
                            .map(|(p, q)| (p - q).powi(2))
                            .sum();
                        (grids[l].cell_volume() * s).sqrt()
                    }
                    Err(_) => f64::NAN,
                };
                rows.push(SweepRow {
                    axis_value: values[l],
                    norm_name: "v_l2".into(),
                    difference: dv,
                });
            }
        }
    }
    Ok(SweepResult::assemble(axis, values, rows, failures))
}
