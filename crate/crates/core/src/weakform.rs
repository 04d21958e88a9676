//! Weak-form residuals of a stored trajectory against smooth test functions.
//!
//! Three forms are evaluated, each in a regularized mode (the identity the
//! ε-solution satisfies exactly) and a limit mode (ε = 0 integrands applied
//! to the ε-solution):
//!
//! * subsolution `S = RHS − LHS` of the tested `u` equation,
//! * signal identity `V = LHS − RHS` of the tested `v` equation,
//! * logarithmic supersolution `L = LHS − RHS` of the `u` equation tested
//!   by `φ/(u+1)`.
//!
//! Space integrals use the midpoint rule on cell centres. In time the data
//! is interpolated linearly between snapshots and integrated against the
//! analytic temporal factor by Gauss–Legendre quadrature on each interval. Test-function derivatives are
//! analytic; solution gradients are face gradients averaged to centres.

use std::f64::consts::{E, PI};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_gradient, Field, Grid};
use crate::stepper::Trajectory;

/// Minimum number of snapshots inside a nonempty temporal support.
pub const MIN_WINDOW_SNAPSHOTS: usize = 8;
/// Default multiplier `A` of `(h + dt)` in the audit tolerance.
pub const DEFAULT_TOL_FACTOR: f64 = 10.0;

/// Temporal factor of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Temporal {
    /// `e·exp(−1/(1−s²))` with `s` mapping `(t1, t2)` onto `(−1, 1)`; peak 1.
    /// `t1 == t2` gives the zero function.
    Bump { t1: f64, t2: f64 },
    /// `exp(1 − 1/(1−(t/t2)²))` on `[0, t2)`, zero afterwards; equals 1 at 0.
    InitialWindow { t2: f64 },
}

impl Temporal {
    /// Closed support `[a, b]`, or `None` when the function vanishes.
    pub fn support(&self) -> Option<(f64, f64)> {
        match *self {
            Temporal::Bump { t1, t2 } if t2 > t1 => Some((t1, t2)),
            Temporal::Bump { .. } => None,
            Temporal::InitialWindow { t2 } => Some((0.0, t2)),
        }
    }

    /// `(η(t), η′(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            Temporal::Bump { t1, t2 } => {
                if !(t2 > t1) || t <= t1 || t >= t2 {
                    return (0.0, 0.0);
                }
                let s = (2.0 * t - t1 - t2) / (t2 - t1);
                let q = 1.0 - s * s;
                let eta = E * (-1.0 / q).exp();
                (eta, eta * (-2.0 * s / (q * q)) * 2.0 / (t2 - t1))
            }
            Temporal::InitialWindow { t2 } => {
                if t >= t2 || t < 0.0 {
                    return (0.0, 0.0);
                }
                let tau = t / t2;
                let q = 1.0 - tau * tau;
                let eta = (1.0 - 1.0 / q).exp();
                (eta, eta * (-2.0 * tau / (q * q)) / t2)
            }
        }
    }

    fn validate(&self, t_end: f64) -> Result<()> {
        let ok = match *self {
            Temporal::Bump { t1, t2 } => t1 >= 0.0 && t2 >= t1 && t2 <= t_end,
            Temporal::InitialWindow { t2 } => t2 > 0.0 && t2 <= t_end,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::TestFunction(format!(
                "window {self:?} is not inside [0, {t_end}]"
            )))
        }
    }
}

/// One cosine product `a ∏ cos(k_i π (x_i − lo_i) / L_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineMode {
    pub k: [u32; 2],
    pub a: f64,
}

/// `φ(x, t) = (c0 + Σ modes) · η(t)` on a fixed rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub id: String,
    pub c0: f64,
    pub modes: Vec<CosineMode>,
    pub temporal: Temporal,
    dim: usize,
    lower: [f64; 2],
    length: [f64; 2],
}

impl TestFunction {
    /// Fails unless `c0 ≥ Σ|a|`, the window lies in `[0, t_end]` and every
    /// mode index is zero on axes the grid does not have.
    pub fn new(
        id: impl Into<String>,
        c0: f64,
        modes: Vec<CosineMode>,
        temporal: Temporal,
        g: &Grid,
        t_end: f64,
    ) -> Result<Self> {
        temporal.validate(t_end)?;
        let total: f64 = modes.iter().map(|m| m.a.abs()).sum();
        if !c0.is_finite() || !total.is_finite() || c0 < total {
            return Err(Error::TestFunction(format!(
                "offset {c0} is below the coefficient sum {total}; the function could go negative"
            )));
        }
        if g.dim() == 1 && modes.iter().any(|m| m.k[1] != 0) {
            return Err(Error::TestFunction("second-axis mode on a 1D grid".into()));
        }
        Ok(TestFunction {
            id: id.into(),
            c0,
            modes,
            temporal,
            dim: g.dim(),
            lower: [g.lower(0), g.lower(1)],
            length: [g.length(0), g.length(1)],
        })
    }

    fn wavenumbers(&self, m: &CosineMode) -> [f64; 2] {
        [
            m.k[0] as f64 * PI / self.length[0],
            if self.dim == 2 {
                m.k[1] as f64 * PI / self.length[1]
            } else {
                0.0
            },
        ]
    }

    /// `(φ_x, ∇φ_x, Δφ_x)` of the spatial part at `x`.
    pub fn spatial(&self, x: [f64; 2]) -> (f64, [f64; 2], f64) {
        let mut val = self.c0;
        let mut grad = [0.0; 2];
        let mut lap = 0.0;
        for m in &self.modes {
            let w = self.wavenumbers(m);
            let arg = [w[0] * (x[0] - self.lower[0]), w[1] * (x[1] - self.lower[1])];
            let (c, s) = ([arg[0].cos(), arg[1].cos()], [arg[0].sin(), arg[1].sin()]);
            let term = m.a * c[0] * c[1];
            val += term;
            grad[0] -= m.a * w[0] * s[0] * c[1];
            grad[1] -= m.a * w[1] * c[0] * s[1];
            lap -= (w[0] * w[0] + w[1] * w[1]) * term;
        }
        (val, grad, lap)
    }

    /// `φ(x, t)`.
    pub fn value(&self, x: [f64; 2], t: f64) -> f64 {
        self.spatial(x).0 * self.temporal.eval(t).0
    }
}

/// Builds the default nonnegative test function: unit-free `amplitude` on
/// each listed mode and the smallest admissible offset.
pub fn make_test_function(
    id: impl Into<String>,
    temporal: Temporal,
    mode_indices: &[[u32; 2]],
    amplitude: f64,
    g: &Grid,
    t_end: f64,
) -> Result<TestFunction> {
    if !(amplitude > 0.0) {
        return Err(Error::TestFunction(format!("amplitude {amplitude} must be > 0")));
    }
    let modes: Vec<_> = mode_indices.iter().map(|&k| CosineMode { k, a: amplitude }).collect();
    let c0 = amplitude * modes.len().max(1) as f64;
    TestFunction::new(id, c0, modes, temporal, g, t_end)
}

/// Two spatial modes times three windows, one of them touching t = 0.
pub fn standard_suite(g: &Grid, t_end: f64) -> Result<Vec<TestFunction>> {
    let windows = [
        ("init", Temporal::InitialWindow { t2: 0.3 * t_end }),
        (
            "early",
            Temporal::Bump {
                t1: 0.2 * t_end,
                t2: 0.6 * t_end,
            },
        ),
        (
            "late",
            Temporal::Bump {
                t1: 0.5 * t_end,
                t2: 0.95 * t_end,
            },
        ),
    ];
    let mut suite = Vec::new();
    for k in 1..=2u32 {
        let mode = [k, if g.dim() == 2 { k } else { 0 }];
        for (name, w) in windows {
            suite.push(make_test_function(format!("k{k}_{name}"), w, &[mode], 1.0, g, t_end)?);
        }
    }
    Ok(suite)
}

/// Which integrands are used for the ε-dependent factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `u/(1+εu)` in fluxes, `uv/((1+εu)(1+εv))` in consumption.
    Regularized,
    /// `u` in fluxes, `uv` in consumption.
    Limit,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Regularized => "regularized",
            Mode::Limit => "limit",
        }
    }
}

/// Signed residuals of the three forms plus the largest term magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    pub s: f64,
    pub v: f64,
    pub l: f64,
    /// Largest term of the three forms with its integrand replaced by the
    /// absolute value.
    pub scale: f64,
}

/// Cellwise solution quantities of one snapshot, shared by all test
/// functions.
struct SnapshotData {
    t: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    log_u1: Vec<f64>,
    grad_log_v: [Vec<f64>; 2],
    grad_log_u1: [Vec<f64>; 2],
    grad_v: [Vec<f64>; 2],
    /// `u/(1+εu)`
    sat: Vec<f64>,
}

impl SnapshotData {
    fn new(state: &crate::model::State, g: &Grid, eps: f64) -> Self {
        let log_v = state.v.map(f64::ln);
        let log_u1 = state.u.map(f64::ln_1p);
        SnapshotData {
            t: state.t,
            u: state.u.values().to_vec(),
            v: state.v.values().to_vec(),
            grad_log_v: cell_gradient(&log_v, g),
            grad_log_u1: cell_gradient(&log_u1, g),
            grad_v: cell_gradient(&state.v, g),
            sat: state.u.values().iter().map(|&u| u / (1.0 + eps * u)).collect(),
            log_u1: log_u1.into_vec(),
        }
    }
}

/// Per-cell spatial part of one test function.
struct SpatialSamples {
    phi: Vec<f64>,
    grad: [Vec<f64>; 2],
    lap: Vec<f64>,
}

impl SpatialSamples {
    fn new(tf: &TestFunction, g: &Grid) -> Self {
        let n = g.total_cells();
        let mut out = SpatialSamples {
            phi: vec![0.0; n],
            grad: [vec![0.0; n], vec![0.0; n]],
            lap: vec![0.0; n],
        };
        for (c, x) in g.centers().into_iter().enumerate() {
            let (p, gr, l) = tf.spatial(x);
            out.phi[c] = p;
            out.grad[0][c] = gr[0];
            out.grad[1][c] = gr[1];
            out.lap[c] = l;
        }
        out
    }
}

/// Spatial integrals of every term at one snapshot, signed and of the
/// absolute integrand; index names follow the order in which terms are
/// combined in [`combine`].
struct Terms {
    val: [f64; N_TERMS],
    abs: [f64; N_TERMS],
}

const N_TERMS: usize = 18;
// subsolution
const S_U: usize = 0; // ∫uφ
const S_U_LAP: usize = 1; // ∫uΔφ
const S_FLUX_REG: usize = 2; // ∫ u/(1+εu) ∇φ·∇log v
const S_FLUX_LIM: usize = 3; // ∫ u ∇φ·∇log v
const S_U_SQ: usize = 4; // ∫u²φ
                         // signal identity
const V_V: usize = 5; // ∫vψ
const V_GRAD: usize = 6; // ∫∇v·∇ψ
const V_CONS_REG: usize = 7; // ∫ψ uv/((1+εu)(1+εv))
const V_CONS_LIM: usize = 8; // ∫ψ uv
                             // logarithmic supersolution
const L_LOG: usize = 9; // ∫log(u+1)φ
const L_GRAD: usize = 10; // ∫∇log(u+1)·∇φ
const L_GRAD_SQ: usize = 11; // ∫φ|∇log(u+1)|²
const L_CROSS_REG: usize = 12; // ∫ u/((1+εu)(u+1)) ∇log v·∇φ
const L_CROSS_LIM: usize = 13; // ∫ u/(u+1) ∇log v·∇φ
const L_MIX_REG: usize = 14; // ∫ u/((1+εu)(u+1)) φ ∇log v·∇log(u+1)
const L_MIX_LIM: usize = 15; // ∫ u/(u+1) φ ∇log v·∇log(u+1)
const L_GROW: usize = 16; // ∫ u/(u+1) φ
const L_DAMP: usize = 17; // ∫ u²/(u+1) φ

fn spatial_terms(d: &SnapshotData, sp: &SpatialSamples, eps: f64, vol: f64) -> Terms {
    let mut out = Terms {
        val: [0.0; N_TERMS],
        abs: [0.0; N_TERMS],
    };
    for c in 0..d.u.len() {
        let mut t = [0.0; N_TERMS];
        let (u, v, phi) = (d.u[c], d.v[c], sp.phi[c]);
        let gphi = [sp.grad[0][c], sp.grad[1][c]];
        let dot = |a: &[Vec<f64>; 2], b: [f64; 2]| a[0][c] * b[0] + a[1][c] * b[1];
        let glv_gphi = dot(&d.grad_log_v, gphi);
        let glu = [d.grad_log_u1[0][c], d.grad_log_u1[1][c]];
        let glv_glu = dot(&d.grad_log_v, glu);
        let sat = d.sat[c];
        let inv_u1 = 1.0 / (1.0 + u);

        t[S_U] = u * phi;
        t[S_U_LAP] = u * sp.lap[c];
        t[S_FLUX_REG] = sat * glv_gphi;
        t[S_FLUX_LIM] = u * glv_gphi;
        t[S_U_SQ] = u * u * phi;

        t[V_V] = v * phi;
        t[V_GRAD] = dot(&d.grad_v, gphi);
        t[V_CONS_REG] = phi * sat * v / (1.0 + eps * v);
        t[V_CONS_LIM] = phi * u * v;

        t[L_LOG] = d.log_u1[c] * phi;
        t[L_GRAD] = glu[0] * gphi[0] + glu[1] * gphi[1];
        t[L_GRAD_SQ] = phi * (glu[0] * glu[0] + glu[1] * glu[1]);
        t[L_CROSS_REG] = sat * inv_u1 * glv_gphi;
        t[L_CROSS_LIM] = u * inv_u1 * glv_gphi;
        t[L_MIX_REG] = sat * inv_u1 * phi * glv_glu;
        t[L_MIX_LIM] = u * inv_u1 * phi * glv_glu;
        t[L_GROW] = u * inv_u1 * phi;
        t[L_DAMP] = u * u * inv_u1 * phi;

        for ((val, abs), ti) in out.val.iter_mut().zip(out.abs.iter_mut()).zip(t) {
            *val += ti;
            *abs += ti.abs();
        }
    }
    for x in out.val.iter_mut().chain(out.abs.iter_mut()) {
        *x *= vol;
    }
    out
}

/// Time-integrated terms: `eta[i] = ∫η·T_i dt`, `deta[i] = ∫η′·T_i dt`,
/// `init[i] = η(0)·T_i(0)`; the `*_abs` arrays integrate `|η|·|T_i|`.
#[derive(Default)]
struct TimeIntegrals {
    eta: [f64; N_TERMS],
    deta: [f64; N_TERMS],
    init: [f64; N_TERMS],
    eta_abs: [f64; N_TERMS],
    deta_abs: [f64; N_TERMS],
    init_abs: [f64; N_TERMS],
}

/// Signed terms of the three forms as `(S lhs, S rhs, V lhs, V rhs, L lhs, L rhs)`.
type FormTerms = ([f64; 2], [f64; 4], [f64; 2], [f64; 2], [f64; 2], [f64; 6]);

fn form_terms(e: &[f64; N_TERMS], d: &[f64; N_TERMS], i: &[f64; N_TERMS], k: (f64, f64, f64), mode: Mode) -> FormTerms {
    let (chi, kappa, mu) = k;
    let (flux, cons, cross, mix) = match mode {
        Mode::Regularized => (S_FLUX_REG, V_CONS_REG, L_CROSS_REG, L_MIX_REG),
        Mode::Limit => (S_FLUX_LIM, V_CONS_LIM, L_CROSS_LIM, L_MIX_LIM),
    };
    (
        [-d[S_U], -i[S_U]],
        [e[S_U_LAP], chi * e[flux], kappa * e[S_U], -mu * e[S_U_SQ]],
        [-d[V_V], -i[V_V]],
        [-e[V_GRAD], -e[cons]],
        [-d[L_LOG], -i[L_LOG]],
        [
            -e[L_GRAD],
            e[L_GRAD_SQ],
            chi * e[cross],
            -chi * e[mix],
            kappa * e[L_GROW],
            -mu * e[L_DAMP],
        ],
    )
}

fn combine(ti: &TimeIntegrals, chi: f64, kappa: f64, mu: f64, mode: Mode) -> Residuals {
    let k = (chi, kappa, mu);
    let (s_lhs, s_rhs, v_lhs, v_rhs, l_lhs, l_rhs) = form_terms(&ti.eta, &ti.deta, &ti.init, k, mode);
    let a = form_terms(&ti.eta_abs, &ti.deta_abs, &ti.init_abs, k, mode);
    let scale =
        a.0.iter()
            .chain(&a.1)
            .chain(&a.2)
            .chain(&a.3)
            .chain(&a.4)
            .chain(&a.5)
            .fold(0.0f64, |m, x| m.max(x.abs()));
    let sum = |xs: &[f64]| xs.iter().sum::<f64>();
    Residuals {
        s: sum(&s_rhs) - sum(&s_lhs),
        v: sum(&v_lhs) - sum(&v_rhs),
        l: sum(&l_lhs) - sum(&l_rhs),
        scale,
    }
}

/// Five-point Gauss–Legendre nodes and weights on `[-1, 1]`.
const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

/// Per-snapshot weights of `∫η·T dt`, `∫η′·T dt` and `∫|η′|·|T| dt` for data
/// `T` interpolated linearly between snapshots. The `η′` weights sum to
/// `η(t_last) − η(t_0)` up to roundoff, so constant data is balanced exactly.
struct TimeWeights {
    eta: Vec<f64>,
    deta: Vec<f64>,
    deta_abs: Vec<f64>,
}

fn time_weights(temporal: &Temporal, times: &[f64]) -> TimeWeights {
    let n = times.len();
    let mut w = TimeWeights {
        eta: vec![0.0; n],
        deta: vec![0.0; n],
        deta_abs: vec![0.0; n],
    };
    let Some((a, b)) = temporal.support() else {
        return w;
    };
    for k in 0..n.saturating_sub(1) {
        let (t0, t1) = (times[k], times[k + 1]);
        if t1 <= a || t0 >= b {
            continue;
        }
        let (mid, half) = (0.5 * (t0 + t1), 0.5 * (t1 - t0));
        let mut mean_eta = 0.0;
        for (x, gw) in GAUSS5 {
            let t = mid + half * x;
            let s = (t - t0) / (t1 - t0);
            let (eta, deta) = temporal.eval(t);
            let c = half * gw;
            w.eta[k] += c * eta * (1.0 - s);
            w.eta[k + 1] += c * eta * s;
            w.deta_abs[k] += c * deta.abs() * (1.0 - s);
            w.deta_abs[k + 1] += c * deta.abs() * s;
            mean_eta += 0.5 * gw * eta;
        }
        // ∫η′·hat by parts, so the weights telescope to η(end) − η(start)
        w.deta[k] += mean_eta - temporal.eval(t0).0;
        w.deta[k + 1] += temporal.eval(t1).0 - mean_eta;
    }
    w
}

/// Precomputed snapshot data for repeated residual evaluation.
pub struct Auditor<'a> {
    traj: &'a Trajectory,
    data: Vec<SnapshotData>,
}

impl<'a> Auditor<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        let eps = traj.params.eps;
        let data: Vec<_> = traj
            .snapshots
            .par_iter()
            .map(|s| SnapshotData::new(s, &traj.grid, eps))
            .collect();
        Auditor { traj, data }
    }

    fn time_integrals(&self, tf: &TestFunction) -> Result<Option<TimeIntegrals>> {
        let Some((a, b)) = tf.temporal.support() else {
            return Ok(None);
        };
        let inside = self.data.iter().filter(|d| d.t >= a && d.t <= b).count();
        if inside < MIN_WINDOW_SNAPSHOTS {
            return Err(Error::Quadrature(format!(
                "test function {} has {inside} snapshots in [{a}, {b}], need {MIN_WINDOW_SNAPSHOTS}",
                tf.id
            )));
        }
        if b > self.traj.last().t * (1.0 + 1e-12) {
            return Err(Error::Quadrature(format!(
                "window of {} ends after the trajectory (t = {})",
                tf.id,
                self.traj.last().t
            )));
        }
        let g = &self.traj.grid;
        let sp = SpatialSamples::new(tf, g);
        let eps = self.traj.params.eps;
        let times: Vec<f64> = self.data.iter().map(|d| d.t).collect();
        let w = time_weights(&tf.temporal, &times);
        let eta0 = tf.temporal.eval(times[0]).0;
        let mut ti = TimeIntegrals::default();
        for (k, d) in self.data.iter().enumerate() {
            if w.eta[k] == 0.0 && w.deta_abs[k] == 0.0 && (k > 0 || eta0 == 0.0) {
                continue;
            }
            let terms = spatial_terms(d, &sp, eps, g.cell_volume());
            for i in 0..N_TERMS {
                ti.eta[i] += w.eta[k] * terms.val[i];
                ti.deta[i] += w.deta[k] * terms.val[i];
                ti.eta_abs[i] += w.eta[k] * terms.abs[i];
                ti.deta_abs[i] += w.deta_abs[k] * terms.abs[i];
            }
            if k == 0 {
                for i in 0..N_TERMS {
                    ti.init[i] = eta0 * terms.val[i];
                    ti.init_abs[i] = eta0 * terms.abs[i];
                }
            }
        }
        Ok(Some(ti))
    }

    /// Residuals of all three forms in `mode`.
    pub fn residuals(&self, tf: &TestFunction, mode: Mode) -> Result<Residuals> {
        let p = &self.traj.params;
        Ok(match self.time_integrals(tf)? {
            None => Residuals::default(),
            Some(ti) => combine(&ti, p.chi, p.kappa, p.mu, mode),
        })
    }

    /// Both modes at once, sharing the quadrature.
    pub fn both(&self, tf: &TestFunction) -> Result<(Residuals, Residuals)> {
        let p = &self.traj.params;
        Ok(match self.time_integrals(tf)? {
            None => (Residuals::default(), Residuals::default()),
            Some(ti) => (
                combine(&ti, p.chi, p.kappa, p.mu, Mode::Regularized),
                combine(&ti, p.chi, p.kappa, p.mu, Mode::Limit),
            ),
        })
    }
}

/// `S` of a single test function.
pub fn subsolution_residual(traj: &Trajectory, tf: &TestFunction, mode: Mode) -> Result<f64> {
    Ok(Auditor::new(traj).residuals(tf, mode)?.s)
}

/// `V` of a single test function.
pub fn v_identity_residual(traj: &Trajectory, tf: &TestFunction, mode: Mode) -> Result<f64> {
    Ok(Auditor::new(traj).residuals(tf, mode)?.v)
}

/// `L` of a single test function.
pub fn supersolution_residual(traj: &Trajectory, tf: &TestFunction, mode: Mode) -> Result<f64> {
    Ok(Auditor::new(traj).residuals(tf, mode)?.l)
}

/// One report row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakFormEntry {
    pub testfn_id: String,
    pub mode: Mode,
    pub s: f64,
    pub v: f64,
    pub l: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Limit-mode minus regularized-mode residuals of one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizationGap {
    pub testfn_id: String,
    pub s: f64,
    pub v: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakFormReport {
    pub entries: Vec<WeakFormEntry>,
    pub gaps: Vec<RegularizationGap>,
    pub h: f64,
    pub dt: f64,
    pub snapshot_count: usize,
    pub tol_factor: f64,
}

impl WeakFormReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["testfn_id", "mode", "S", "V", "L", "tol", "pass"])?;
        for e in &self.entries {
            out.write_record([
                e.testfn_id.clone(),
                e.mode.as_str().to_string(),
                crate::fmt_num(e.s),
                crate::fmt_num(e.v),
                crate::fmt_num(e.l),
                crate::fmt_num(e.tol),
                e.pass.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Evaluates the suite in both modes.
///
/// A regularized row passes when `|S|, |V|, |L| ≤ tol`; a limit row when
/// `S ≥ −tol` and `L ≥ −tol`. Here `tol = A (h + dt)` times the largest
/// term of that row, `h` the largest spacing and `dt` the largest step.
pub fn audit(traj: &Trajectory, suite: &[TestFunction], tol_factor: f64) -> Result<WeakFormReport> {
    if suite.is_empty() {
        return Err(Error::TestFunction("empty test-function suite".into()));
    }
    let h = traj.grid.max_spacing();
    let dt = traj.diagnostics.max_dt;
    let auditor = Auditor::new(traj);
    let results: Vec<(Residuals, Residuals)> = suite.par_iter().map(|tf| auditor.both(tf)).collect::<Result<_>>()?;

    let mut entries = Vec::new();
    let mut gaps = Vec::new();
    for (tf, (reg, lim)) in suite.iter().zip(results) {
        let tol_reg = tol_factor * (h + dt) * reg.scale;
        let tol_lim = tol_factor * (h + dt) * lim.scale;
        entries.push(WeakFormEntry {
            testfn_id: tf.id.clone(),
            mode: Mode::Regularized,
            s: reg.s,
            v: reg.v,
            l: reg.l,
            tol: tol_reg,
            pass: reg.s.abs() <= tol_reg && reg.v.abs() <= tol_reg && reg.l.abs() <= tol_reg,
        });
        entries.push(WeakFormEntry {
            testfn_id: tf.id.clone(),
            mode: Mode::Limit,
            s: lim.s,
            v: lim.v,
            l: lim.l,
            tol: tol_lim,
            pass: lim.s >= -tol_lim && lim.l >= -tol_lim,
        });
        gaps.push(RegularizationGap {
            testfn_id: tf.id.clone(),
            s: lim.s - reg.s,
            v: lim.v - reg.v,
            l: lim.l - reg.l,
        });
    }
    Ok(WeakFormReport {
        entries,
        gaps,
        h,
        dt,
        snapshot_count: traj.snapshots.len(),
        tol_factor,
    })
}

/// Samples `φ` on the grid at time `t`; convenience for diagnostics.
pub fn sample(tf: &TestFunction, g: &Grid, t: f64) -> Field {
    Field::from_fn(g, |x| tf.value(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convergence::logistic_solution;
    use crate::estimates::EstimateLedger;
    use crate::grid::build_grid;
    use crate::model::{ModelParams, State};
    use crate::stepper::{run, RunDiagnostics, StepConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn line() -> Grid {
        build_grid(1, &[(0.0, 1.0)], &[32]).unwrap()
    }

    /// Wraps given snapshots as a trajectory without running the solver.
    fn synthetic(g: &Grid, p: ModelParams, snapshots: Vec<State>, dt: f64) -> Trajectory {
        let ledger = EstimateLedger::new(&snapshots[0], g, &p);
        let rows = vec![ledger.row(); snapshots.len()];
        Trajectory {
            grid: g.clone(),
            params: p,
            snapshots,
            ledger_rows: rows,
            ledger,
            diagnostics: RunDiagnostics {
                steps: 1,
                min_dt: dt,
                max_dt: dt,
                min_cfl_dt: dt,
                cfl_limited_steps: 0,
                min_u: 0.0,
                lower_bound_ratio: 1.0,
                max_sup_increase: 0.0,
            },
        }
    }

    #[test]
    fn temporal_profiles() {
        let b = Temporal::Bump { t1: 0.2, t2: 0.6 };
        assert_relative_eq!(b.eval(0.4).0, 1.0, max_relative = 1e-15);
        assert!(b.eval(0.4).1.abs() < 1e-12);
        assert_eq!(b.eval(0.1), (0.0, 0.0));
        assert_eq!(b.eval(0.6), (0.0, 0.0));
        let w = Temporal::InitialWindow { t2: 0.3 };
        assert_eq!(w.eval(0.0), (1.0, 0.0));
        assert_eq!(w.eval(0.3), (0.0, 0.0));
        assert_eq!(Temporal::Bump { t1: 0.5, t2: 0.5 }.support(), None);

        // derivatives against central differences
        for (tp, t) in [(b, 0.31), (b, 0.52), (w, 0.11), (w, 0.27)] {
            let h = 1e-6;
            let fd = (tp.eval(t + h).0 - tp.eval(t - h).0) / (2.0 * h);
            assert_relative_eq!(tp.eval(t).1, fd, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn constructor_rejects_bad_input() {
        let g = line();
        let bump = Temporal::Bump { t1: 0.1, t2: 0.5 };
        let mode = vec![CosineMode { k: [1, 0], a: 1.0 }];
        assert!(TestFunction::new("a", 0.5, mode.clone(), bump, &g, 1.0).is_err());
        assert!(TestFunction::new("b", 1.0, mode.clone(), Temporal::Bump { t1: 0.5, t2: 1.5 }, &g, 1.0).is_err());
        assert!(TestFunction::new("c", 1.0, mode.clone(), Temporal::Bump { t1: -0.1, t2: 0.5 }, &g, 1.0).is_err());
        assert!(TestFunction::new("d", 1.0, vec![CosineMode { k: [1, 1], a: 1.0 }], bump, &g, 1.0).is_err());
        assert!(TestFunction::new("e", 1.0, mode, bump, &g, 1.0).is_ok());
        assert!(make_test_function("f", bump, &[[1, 0]], 0.0, &g, 1.0).is_err());
    }

    #[test]
    fn constant_in_space_has_no_derivatives() {
        let g = build_grid(2, &[(0.0, 1.0), (0.0, 2.0)], &[4, 4]).unwrap();
        let tf = TestFunction::new("c", 1.0, vec![], Temporal::Bump { t1: 0.1, t2: 0.4 }, &g, 1.0).unwrap();
        for x in g.centers() {
            assert_eq!(tf.spatial(x), (1.0, [0.0, 0.0], 0.0));
        }
    }

    #[test]
    fn cosine_mode_satisfies_neumann_and_derivatives() {
        let g = build_grid(2, &[(0.5, 1.5), (-1.0, 2.0)], &[4, 4]).unwrap();
        let tf = make_test_function(
            "m",
            Temporal::Bump { t1: 0.0, t2: 1.0 },
            &[[1, 2], [3, 1]],
            0.7,
            &g,
            1.0,
        )
        .unwrap();
        for y in [-1.0, -0.3, 0.8, 2.0] {
            assert!(tf.spatial([0.5, y]).1[0].abs() < 1e-14);
            assert!(tf.spatial([1.5, y]).1[0].abs() < 1e-14);
        }
        for x in [0.5, 0.9, 1.5] {
            assert!(tf.spatial([x, -1.0]).1[1].abs() < 1e-14);
            assert!(tf.spatial([x, 2.0]).1[1].abs() < 1e-14);
        }
        let x = [0.83, 0.41];
        let h = 1e-5;
        let f = |x: [f64; 2]| tf.spatial(x).0;
        let (_, grad, lap) = tf.spatial(x);
        let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
        let gy = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
        assert_relative_eq!(grad[0], gx, max_relative = 1e-8);
        assert_relative_eq!(grad[1], gy, max_relative = 1e-8);
        let fd_lap = (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h])
            - 4.0 * f(x))
            / (h * h);
        assert_relative_eq!(lap, fd_lap, max_relative = 1e-4);
    }

    #[test]
    fn initial_window_exercises_initial_term() {
        let g = line();
        let tf = make_test_function("w", Temporal::InitialWindow { t2: 0.3 }, &[[1, 0]], 1.0, &g, 1.0).unwrap();
        assert!(sample(&tf, &g, 0.0).max() > 0.0);
    }

    #[test]
    fn empty_population_with_flat_signal_gives_zero_residuals() {
        let g = line();
        let p = ModelParams::new(2.0, 0.0, 0.5, 0.1, 0.5).unwrap();
        let cfg = StepConfig {
            dt_max: 1e-2,
            cfl_safety: 0.5,
            snapshot_every: 0.01,
        };
        let traj = run(Field::zeros(&g), Field::constant(&g, 1.5), &p, &g, &cfg).unwrap();
        let suite = standard_suite(&g, 0.5).unwrap();
        let rep = audit(&traj, &suite, DEFAULT_TOL_FACTOR).unwrap();
        assert!(rep.pass(), "{rep:?}");
        for e in &rep.entries {
            assert_eq!((e.s, e.l), (0.0, 0.0), "{}", e.testfn_id);
            assert!(e.v.abs() < 1e-13, "{}", e.v);
        }
    }

    #[test]
    fn empty_support_is_trivially_zero() {
        let g = line();
        let p = ModelParams::new(2.0, 1.0, 0.5, 0.1, 0.1).unwrap();
        let u0 = Field::from_fn(&g, |x| 1.0 + x[0]);
        let v0 = Field::from_fn(&g, |x| 1.0 + 0.3 * (PI * x[0]).cos());
        let traj = run(u0, v0, &p, &g, &StepConfig::default()).unwrap();
        let tf = make_test_function("e", Temporal::Bump { t1: 0.05, t2: 0.05 }, &[[1, 0]], 1.0, &g, 0.1).unwrap();
        let rep = audit(&traj, &[tf], DEFAULT_TOL_FACTOR).unwrap();
        assert!(rep.pass());
        assert!(rep.entries.iter().all(|e| e.s == 0.0 && e.v == 0.0 && e.l == 0.0));
    }

    #[test]
    fn sparse_snapshots_are_rejected() {
        let g = line();
        let p = ModelParams::new(0.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let cfg = StepConfig {
            dt_max: 1e-2,
            cfl_safety: 0.5,
            snapshot_every: 0.25,
        };
        let traj = run(Field::constant(&g, 0.5), Field::constant(&g, 1.0), &p, &g, &cfg).unwrap();
        let suite = standard_suite(&g, 1.0).unwrap();
        assert!(matches!(audit(&traj, &suite, 10.0), Err(Error::Quadrature(_))));
    }

    /// Exact logistic trajectory sampled at snapshot times: only quadrature
    /// error remains, and the limit and regularized `S`, `L` coincide when
    /// the signal is flat.
    #[test]
    fn exact_logistic_trajectory_balances() {
        let g = line();
        let p = ModelParams::new(3.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let snaps: Vec<State> = (0..=200)
            .map(|k| {
                let t = k as f64 / 200.0;
                let u = logistic_solution(0.5, p.kappa, p.mu, t);
                State::new(Field::constant(&g, u), Field::constant(&g, 1.0), t)
            })
            .collect();
        let traj = synthetic(&g, p, snaps, 1e-3);
        for temporal in [Temporal::InitialWindow { t2: 0.3 }, Temporal::Bump { t1: 0.2, t2: 0.6 }] {
            let tf = TestFunction::new("c", 1.0, vec![], temporal, &g, 1.0).unwrap();
            let a = Auditor::new(&traj);
            let (reg, lim) = a.both(&tf).unwrap();
            assert!(reg.s.abs() <= 1e-3 * reg.scale, "{reg:?}");
            assert!(reg.l.abs() <= 1e-3 * reg.scale, "{reg:?}");
            assert_eq!(reg.s, lim.s);
            assert_eq!(reg.l, lim.l);
        }
    }

    #[test]
    fn uniform_solver_run_matches_logistic_balance() {
        let g = line();
        let p = ModelParams::new(3.0, 1.0, 1.0, 0.1, 1.0).unwrap();
        let cfg = StepConfig {
            dt_max: 1e-3,
            cfl_safety: 0.5,
            snapshot_every: 0.005,
        };
        let traj = run(Field::constant(&g, 0.5), Field::constant(&g, 1.0), &p, &g, &cfg).unwrap();
        let tf = TestFunction::new("c", 1.0, vec![], Temporal::Bump { t1: 0.1, t2: 0.9 }, &g, 1.0).unwrap();
        let r = Auditor::new(&traj).residuals(&tf, Mode::Regularized).unwrap();
        assert!(r.s.abs() <= 1e-3 * r.scale, "{r:?}");
        assert!(r.l.abs() <= 1e-3 * r.scale, "{r:?}");
    }

    #[test]
    fn report_csv_schema() {
        let g = line();
        let p = ModelParams::new(2.0, 1.0, 0.5, 0.1, 0.5).unwrap();
        let cfg = StepConfig {
            dt_max: 1e-2,
            cfl_safety: 0.5,
            snapshot_every: 0.01,
        };
        let u0 = Field::from_fn(&g, |x| 2.0 * (-(x[0] - 0.5).powi(2) / 0.02).exp());
        let v0 = Field::from_fn(&g, |x| 1.0 + 0.3 * (PI * x[0]).cos());
        let traj = run(u0, v0, &p, &g, &cfg).unwrap();
        let rep = audit(&traj, &standard_suite(&g, 0.5).unwrap(), 10.0).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("testfn_id,mode,S,V,L,tol,pass\n"));
        assert_eq!(text.lines().count(), 13);
        assert_eq!(rep.gaps.len(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn test_functions_are_nonnegative(
            ks in prop::collection::vec((0u32..5, 0u32..5, -2.0f64..2.0), 0..4),
            slack in 0.0f64..1.0,
            pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 10_000),
        ) {
            let g = build_grid(2, &[(-1.0, 2.0), (0.0, 0.5)], &[4, 4]).unwrap();
            let modes: Vec<_> = ks.iter().map(|&(a, b, c)| CosineMode { k: [a, b], a: c }).collect();
            let c0 = modes.iter().map(|m| m.a.abs()).sum::<f64>() + slack;
            let tf = TestFunction::new("p", c0, modes, Temporal::InitialWindow { t2: 1.0 }, &g, 1.0).unwrap();
            for (x, y, t) in pts {
                let v = tf.value([-1.0 + 3.0 * x, 0.5 * y], t);
                prop_assert!(v >= -1e-12 * c0.max(1.0));
            }
        }

        #[test]
        fn residuals_are_linear_in_the_test_function(a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let g = build_grid(1, &[(0.0, 1.0)], &[24]).unwrap();
            let p = ModelParams::new(2.0, 1.0, 0.5, 0.1, 0.4).unwrap();
            let cfg = StepConfig { dt_max: 2e-3, cfl_safety: 0.5, snapshot_every: 0.01 };
            let u0 = Field::from_fn(&g, |x| 2.0 * (-(x[0] - 0.5).powi(2) / 0.02).exp());
            let v0 = Field::from_fn(&g, |x| 1.0 + 0.3 * (PI * x[0]).cos());
            let traj = run(u0, v0, &p, &g, &cfg).unwrap();
            let w = Temporal::Bump { t1: 0.05, t2: 0.35 };
            let m1 = vec![CosineMode { k: [1, 0], a: 1.0 }];
            let m2 = vec![CosineMode { k: [2, 0], a: -0.5 }];
            let f1 = TestFunction::new("1", 1.0, m1, w, &g, 0.4).unwrap();
            let f2 = TestFunction::new("2", 0.5, m2, w, &g, 0.4).unwrap();
            let mix = TestFunction::new(
                "mix", a + 0.5 * b,
                vec![CosineMode { k: [1, 0], a }, CosineMode { k: [2, 0], a: -0.5 * b }],
                w, &g, 0.4,
            ).unwrap();
            let aud = Auditor::new(&traj);
            let r1 = aud.residuals(&f1, Mode::Regularized).unwrap();
            let r2 = aud.residuals(&f2, Mode::Regularized).unwrap();
            let rm = aud.residuals(&mix, Mode::Regularized).unwrap();
            let scale = r1.scale.max(r2.scale) * (a + b);
            for (x, y, z) in [(r1.s, r2.s, rm.s), (r1.v, r2.v, rm.v), (r1.l, r2.l, rm.l)] {
                prop_assert!((a * x + b * y - z).abs() <= 1e-10 * scale);
            }
        }
    }
}
