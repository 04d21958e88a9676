//! A priori bound constants and the running space-time integrals they
//! control.
//!
//! [`bounds_from_data`] evaluates the constants `C1..C11` from the initial
//! data; [`EstimateLedger`] accumulates the matching quantities along a run
//! and [`check`] compares the two.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{cell_gradient, dirichlet_energy, integrate, integrate_map, laplacian, Field, Grid};
use crate::model::{consumption_rate, ModelParams, State};
use crate::stepper::Trajectory;

/// Relative tolerance floor of every bound comparison.
pub const ANALYTIC_TOL: f64 = 1e-6;
/// Multiplier of `h + dt` in the discretization allowance.
pub const DISCRETIZATION_FACTOR: f64 = 10.0;

/// Bound constants valid on `[0, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c11: f64,
    /// Inverse of the first nonzero Neumann eigenvalue of the rectangle.
    pub poincare_cp: f64,
    pub t_end: f64,
}

impl BoundConstants {
    /// `(name, value)` pairs in index order.
    pub fn table(&self) -> [(&'static str, f64); 12] {
        [
            ("C1", self.c1),
            ("C2", self.c2),
            ("C3", self.c3),
            ("C4", self.c4),
            ("C5", self.c5),
            ("C6", self.c6),
            ("C7", self.c7),
            ("C8", self.c8),
            ("C9", self.c9),
            ("C10", self.c10),
            ("C11", self.c11),
            ("C_P", self.poincare_cp),
        ]
    }
}

/// `max_i (L_i / π)²`.
pub fn poincare_constant(g: &Grid) -> f64 {
    (0..g.dim()).map(|a| (g.length(a) / PI).powi(2)).fold(0.0, f64::max)
}

/// Evaluates every bound constant for data `(u0, v0)` on the horizon `t_end`.
pub fn bounds_from_data(u0: &Field, v0: &Field, p: &ModelParams, g: &Grid, t_end: f64) -> Result<BoundConstants> {
    if !(p.mu > 0.0) {
        return Err(Error::InvalidParams(format!(
            "mu = {} violates the hypothesis mu > 0; C1 and C2 are undefined",
            p.mu
        )));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParams(format!("horizon {t_end} must be finite and >= 0")));
    }
    if u0.min() < 0.0 {
        return Err(Error::InvalidInitialData("u0 must be nonnegative".into()));
    }
    if !(v0.min() > 0.0) {
        return Err(Error::InvalidInitialData("v0 must be positive".into()));
    }

    let t = t_end;
    let omega = g.domain_measure();
    let v_sup = v0.max();
    let grad_v0_sq = dirichlet_energy(v0, g);
    let cp = poincare_constant(g);

    let c1 = integrate(u0, g).max(p.kappa * omega / p.mu);
    let c2 = (p.kappa * t + 1.0) * c1 / p.mu;
    let c3 = c1 * t - integrate_map(v0, g, |v| (v / v_sup).ln());
    let c4 = 2.0 * (1.0 + p.mu * t) * c1 + p.chi * p.chi * c3;
    let c5 = c4 / 2.0 + c2 / 2.0 + c1 * t + omega * t / 2.0;
    let c6 = c1 * t + c5;
    let c7 = (grad_v0_sq + v_sup * v_sup * c2).sqrt();
    let c8 = (v_sup * v_sup * c2 + grad_v0_sq).sqrt();
    let c9 = c8 + v_sup * c2.sqrt();
    let c10 = 2.0 * integrate(v0, g) - integrate_map(v0, g, f64::ln) + c1 * t;
    let c11 = ((cp + 1.0) * c3 + t * c10 * c10 / omega).sqrt();

    let b = BoundConstants {
        c1,
        c2,
        c3,
        c4,
        c5,
        c6,
        c7,
        c8,
        c9,
        c10,
        c11,
        poincare_cp: cp,
        t_end: t,
    };
    if b.table().iter().any(|(_, x)| !x.is_finite()) {
        return Err(Error::InvalidInitialData("bound constants are not finite".into()));
    }
    Ok(b)
}

/// Spatial integrals of one state that feed the ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrands {
    pub t: f64,
    pub mass: f64,
    pub u_sq: f64,
    pub grad_log_v_sq: f64,
    pub grad_log_u1_sq: f64,
    pub grad_u_l1: f64,
    pub lap_v_sq: f64,
    pub log_v_sq: f64,
    pub consumption: f64,
    pub consumption_rate: f64,
    pub grad_v_sq: f64,
    pub log_v_int: f64,
    pub log_v_l1: f64,
    pub v_sup: f64,
}

impl Integrands {
    pub fn of(state: &State, g: &Grid, p: &ModelParams) -> Self {
        let (u, v) = (state.u.values(), state.v.values());
        let vol = g.cell_volume();
        let log_v = state.v.map(f64::ln);
        let log_u1 = state.u.map(f64::ln_1p);
        let [gx, gy] = cell_gradient(&state.u, g);
        let grad_u_l1 = vol * gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).sum::<f64>();
        let lap = laplacian(&state.v, g);
        let mut consumption = 0.0;
        let mut rate = 0.0;
        for (&ui, &vi) in u.iter().zip(v) {
            let r = consumption_rate(ui, vi, p.eps);
            rate += r;
            consumption += r * vi;
        }
        Integrands {
            t: state.t,
            mass: integrate(&state.u, g),
            u_sq: integrate_map(&state.u, g, |x| x * x),
            grad_log_v_sq: dirichlet_energy(&log_v, g),
            grad_log_u1_sq: dirichlet_energy(&log_u1, g),
            grad_u_l1,
            lap_v_sq: integrate_map(&lap, g, |x| x * x),
            log_v_sq: integrate_map(&log_v, g, |x| x * x),
            consumption: vol * consumption,
            consumption_rate: vol * rate,
            grad_v_sq: dirichlet_energy(&state.v, g),
            log_v_int: integrate(&log_v, g),
            log_v_l1: integrate_map(&log_v, g, f64::abs),
            v_sup: state.v.max(),
        }
    }
}

/// Ledger contents at one instant; one CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    /// ∫₀ᵗ∫u
    pub int_u: f64,
    /// ∫₀ᵗ∫u²
    pub int_u_sq: f64,
    /// ∫₀ᵗ∫|∇log v|²
    pub int_grad_log_v_sq: f64,
    /// ∫₀ᵗ∫|∇log(u+1)|²
    pub int_grad_log_u1_sq: f64,
    /// ∫₀ᵗ∫|∇u|
    pub int_grad_u_l1: f64,
    /// ∫₀ᵗ∫|Δv|²
    pub int_lap_v_sq: f64,
    /// ∫₀ᵗ∫v_t², from backward differences
    pub int_vt_sq: f64,
    /// ∫₀ᵗ∫(log v)²
    pub int_log_v_sq: f64,
    /// ∫₀ᵗ∫uv/((1+εu)(1+εv))
    pub int_consumption: f64,
    /// ∫₀ᵗ∫u/((1+εu)(1+εv))
    pub int_consumption_rate: f64,
    pub mass: f64,
    pub grad_v_l2: f64,
    pub log_v_l1: f64,
    pub log_v_int: f64,
    pub v_sup: f64,
    pub sup_mass: f64,
    pub sup_grad_v_l2: f64,
    pub sup_log_v_l1: f64,
    /// ∫log v₀, fixed at construction.
    pub log_v0_int: f64,
    pub max_dt: f64,
}

impl LedgerRow {
    /// `∫₀ᵗ∫|∇log v|² − (∫log v(t) − ∫log v₀ + ∫₀ᵗ∫u/((1+εu)(1+εv)))`.
    pub fn log_mass_residual(&self) -> f64 {
        self.int_grad_log_v_sq - (self.log_v_int - self.log_v0_int + self.int_consumption_rate)
    }
}

/// Running space-time integrals along one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLedger {
    row: LedgerRow,
    last: Integrands,
}

impl EstimateLedger {
    pub fn new(initial: &State, g: &Grid, p: &ModelParams) -> Self {
        let i = Integrands::of(initial, g, p);
        let grad_v_l2 = i.grad_v_sq.sqrt();
        let row = LedgerRow {
            t: initial.t,
            int_u: 0.0,
            int_u_sq: 0.0,
            int_grad_log_v_sq: 0.0,
            int_grad_log_u1_sq: 0.0,
            int_grad_u_l1: 0.0,
            int_lap_v_sq: 0.0,
            int_vt_sq: 0.0,
            int_log_v_sq: 0.0,
            int_consumption: 0.0,
            int_consumption_rate: 0.0,
            mass: i.mass,
            grad_v_l2,
            log_v_l1: i.log_v_l1,
            log_v_int: i.log_v_int,
            v_sup: i.v_sup,
            sup_mass: i.mass,
            sup_grad_v_l2: grad_v_l2,
            sup_log_v_l1: i.log_v_l1,
            log_v0_int: i.log_v_int,
            max_dt: 0.0,
        };
        EstimateLedger { row, last: i }
    }

    pub fn row(&self) -> LedgerRow {
        self.row
    }

    /// Advances every time integral over one accepted step by the trapezoid
    /// rule; `v_t` uses the backward difference across the step.
    pub fn accumulate(&mut self, before: &State, after: &State, dt: f64, g: &Grid, p: &ModelParams) {
        if dt == 0.0 {
            return;
        }
        let a = if self.last.t == before.t {
            self.last
        } else {
            Integrands::of(before, g, p)
        };
        let b = Integrands::of(after, g, p);
        let trap = |x: f64, y: f64| 0.5 * dt * (x + y);
        let r = &mut self.row;
        r.int_u += trap(a.mass, b.mass);
        r.int_u_sq += trap(a.u_sq, b.u_sq);
        r.int_grad_log_v_sq += trap(a.grad_log_v_sq, b.grad_log_v_sq);
        r.int_grad_log_u1_sq += trap(a.grad_log_u1_sq, b.grad_log_u1_sq);
        r.int_grad_u_l1 += trap(a.grad_u_l1, b.grad_u_l1);
        r.int_lap_v_sq += trap(a.lap_v_sq, b.lap_v_sq);
        r.int_log_v_sq += trap(a.log_v_sq, b.log_v_sq);
        r.int_consumption += trap(a.consumption, b.consumption);
        r.int_consumption_rate += trap(a.consumption_rate, b.consumption_rate);
        let dv_sq: f64 = after
            .v
            .values()
            .iter()
            .zip(before.v.values())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        r.int_vt_sq += g.cell_volume() * dv_sq / dt;

        r.t = after.t;
        r.mass = b.mass;
        r.grad_v_l2 = b.grad_v_sq.sqrt();
        r.log_v_l1 = b.log_v_l1;
        r.log_v_int = b.log_v_int;
        r.v_sup = b.v_sup;
        r.sup_mass = r.sup_mass.max(b.mass);
        r.sup_grad_v_l2 = r.sup_grad_v_l2.max(r.grad_v_l2);
        r.sup_log_v_l1 = r.sup_log_v_l1.max(b.log_v_l1);
        r.max_dt = r.max_dt.max(dt);
        self.last = b;
    }
}

/// One compared inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckEntry {
    pub lemma_id: String,
    pub value: f64,
    pub bound: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Every compared inequality at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub t: f64,
    pub tol: f64,
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, id: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.lemma_id == id)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lemma_id", "value", "bound", "margin", "pass"])?;
        for e in &self.entries {
            out.write_record([
                e.lemma_id.clone(),
                crate::fmt_num(e.value),
                crate::fmt_num(e.bound),
                crate::fmt_num(e.margin),
                e.pass.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `10⁻⁶ + 10 (h + dt)`.
pub fn check_tolerance(h: f64, dt: f64) -> f64 {
    ANALYTIC_TOL + DISCRETIZATION_FACTOR * (h + dt)
}

/// Compares a ledger row against the constants using spatial step `h`.
pub fn check(row: &LedgerRow, bounds: &BoundConstants, h: f64) -> Result<CheckReport> {
    if row.t > bounds.t_end * (1.0 + 1e-12) {
        return Err(Error::InvalidParams(format!(
            "ledger time {} exceeds the horizon {} of the constants",
            row.t, bounds.t_end
        )));
    }
    let tol = check_tolerance(h, row.max_dt);
    let pairs = [
        ("C1_mass", row.sup_mass, bounds.c1),
        ("C2_u_sq", row.int_u_sq, bounds.c2),
        ("C3_grad_log_v", row.int_grad_log_v_sq, bounds.c3),
        ("C4_grad_log_u1", row.int_grad_log_u1_sq, bounds.c4),
        ("C5_grad_u_l1", row.int_grad_u_l1, bounds.c5),
        ("C6_u_w11", row.int_u + row.int_grad_u_l1, bounds.c6),
        ("C7_grad_v_l2", row.sup_grad_v_l2, bounds.c7),
        ("C8_lap_v_l2", row.int_lap_v_sq.sqrt(), bounds.c8),
        ("C9_vt_l2", row.int_vt_sq.sqrt(), bounds.c9),
        ("C10_log_v_l1", row.sup_log_v_l1, bounds.c10),
        (
            "C11_log_v_h1",
            (row.int_log_v_sq + row.int_grad_log_v_sq).sqrt(),
            bounds.c11,
        ),
        (
            "C1T_consumption_rate",
            row.int_consumption_rate,
            bounds.c1 * bounds.t_end,
        ),
    ];
    let entries = pairs
        .into_iter()
        .map(|(id, value, bound)| CheckEntry {
            lemma_id: id.to_string(),
            value,
            bound,
            margin: bound - value,
            pass: value <= bound * (1.0 + tol),
        })
        .collect();
    Ok(CheckReport { t: row.t, tol, entries })
}

/// Final-time residual of the log-mass identity
/// `∫∫|∇log v|² = ∫log v(T) − ∫log v₀ + ∫∫u/((1+εu)(1+εv))`.
pub fn log_mass_identity_residual(traj: &Trajectory) -> f64 {
    traj.ledger.row().log_mass_residual()
}

/// `C1·T − ∫₀ᵀ∫u/((1+εu)(1+εv))`.
pub fn consumption_vs_mass_check(row: &LedgerRow, bounds: &BoundConstants) -> f64 {
    bounds.c1 * bounds.t_end - row.int_consumption_rate
}

/// Writes ledger rows as CSV with a header.
pub fn write_ledger_csv<W: Write>(rows: &[LedgerRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let header = [
        "t",
        "int_u",
        "int_u_sq",
        "int_grad_log_v_sq",
        "int_grad_log_u1_sq",
        "int_grad_u_l1",
        "int_lap_v_sq",
        "int_vt_sq",
        "int_log_v_sq",
        "int_consumption",
        "int_consumption_rate",
        "mass",
        "grad_v_l2",
        "log_v_l1",
        "log_v_int",
        "v_sup",
        "sup_mass",
        "sup_grad_v_l2",
        "sup_log_v_l1",
        "log_v0_int",
        "max_dt",
    ];
    out.write_record(header)?;
    for r in rows {
        let vals = [
            r.t,
            r.int_u,
            r.int_u_sq,
            r.int_grad_log_v_sq,
            r.int_grad_log_u1_sq,
            r.int_grad_u_l1,
            r.int_lap_v_sq,
            r.int_vt_sq,
            r.int_log_v_sq,
            r.int_consumption,
            r.int_consumption_rate,
            r.mass,
            r.grad_v_l2,
            r.log_v_l1,
            r.log_v_int,
            r.v_sup,
            r.sup_mass,
            r.sup_grad_v_l2,
            r.sup_log_v_l1,
            r.log_v0_int,
            r.max_dt,
        ];
        out.write_record(vals.iter().map(|&x| crate::fmt_num(x)))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::stepper::{run, StepConfig};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn constants_match_hand_computation() {
        // Ω = [0,2], four cells of width 0.5
        let g = build_grid(1, &[(0.0, 2.0)], &[4]).unwrap();
        let u0 = Field::new(&g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v0 = Field::new(&g, vec![1.0, 2.0, 4.0, 4.0]).unwrap();
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.1, 2.0).unwrap();
        let b = bounds_from_data(&u0, &v0, &p, &g, 2.0).unwrap();

        let ln2 = 2f64.ln();
        let c1 = 5.0; // ∫u0 = 5 beats κ|Ω|/μ = 4
        let c2 = 3.0 * c1 / 0.5;
        let c3 = c1 * 2.0 + 1.5 * ln2;
        let c4 = 2.0 * 2.0 * c1 + c3;
        let c5 = c4 / 2.0 + c2 / 2.0 + 2.0 * c1 + 2.0;
        let c8 = (16.0 * c2 + 10.0f64).sqrt(); // ∫|∇v0|² = (4 + 16)·0.5
        let c10 = 11.0 - 2.5 * ln2 + 2.0 * c1;
        let cp = (2.0 / PI).powi(2);
        let expected = [
            c1,
            c2,
            c3,
            c4,
            c5,
            2.0 * c1 + c5,
            c8,
            c8,
            c8 + 4.0 * c2.sqrt(),
            c10,
            ((cp + 1.0) * c3 + c10 * c10).sqrt(),
            cp,
        ];
        for ((name, got), want) in b.table().iter().zip(expected) {
            assert!((got - want).abs() <= 1e-14 * want.abs(), "{name}: {got} vs {want}");
        }
    }

    #[test]
    fn constant_formula_special_cases() {
        let g = build_grid(1, &[(0.0, 1.0)], &[8]).unwrap();
        let u0 = Field::constant(&g, 2.0);
        let v0 = Field::constant(&g, 3.0);
        let p = ModelParams::new(1.0, 1.0, 0.5, 0.1, 1.0).unwrap();
        assert_eq!(bounds_from_data(&u0, &v0, &p, &g, 1.0).unwrap().c1, 2.0);

        let p0 = ModelParams::new(1.0, 0.0, 0.5, 0.1, 1.0).unwrap();
        let b = bounds_from_data(&u0, &v0, &p0, &g, 1.5).unwrap();
        assert_eq!(b.c2, b.c1 / 0.5);
        assert_relative_eq!(b.c3, b.c1 * 1.5, max_relative = 1e-15);

        let bad = ModelParams { mu: 0.0, ..p };
        assert!(bounds_from_data(&u0, &v0, &bad, &g, 1.0).is_err());
    }

    #[test]
    fn poincare_uses_longest_side() {
        let g = build_grid(2, &[(0.0, 1.0), (0.0, 3.0)], &[4, 4]).unwrap();
        assert_relative_eq!(poincare_constant(&g), 9.0 / (PI * PI));
    }

    fn standard_1d(n: usize) -> (Grid, Field, Field) {
        let g = build_grid(1, &[(0.0, 1.0)], &[n]).unwrap();
        let u0 = Field::from_fn(&g, |x| 2.0 * (-(x[0] - 0.5).powi(2) / 0.02).exp());
        let v0 = Field::from_fn(&g, |x| 1.0 + 0.3 * (PI * x[0]).cos());
        (g, u0, v0)
    }

    #[test]
    fn zero_dt_leaves_ledger_unchanged() {
        let (g, u0, v0) = standard_1d(16);
        let p = ModelParams::new(2.0, 1.0, 0.5, 0.1, 1.0).unwrap();
        let s = State::new(u0, v0, 0.0);
        let mut l = EstimateLedger::new(&s, &g, &p);
        let before = l.clone();
        l.accumulate(&s, &s, 0.0, &g, &p);
        assert_eq!(l, before);
    }

    #[test]
    fn empty_and_uniform_fields_accumulate_nothing() {
        let g = build_grid(2, &[(0.0, 1.0), (0.0, 1.0)], &[5, 4]).unwrap();
        let p = ModelParams::new(2.0, 0.0, 0.5, 0.1, 1.0).unwrap();
        let a = State::new(Field::zeros(&g), Field::constant(&g, 2.0), 0.0);
        let b = State::new(Field::zeros(&g), Field::constant(&g, 2.0), 0.1);
        let mut l = EstimateLedger::new(&a, &g, &p);
        l.accumulate(&a, &b, 0.1, &g, &p);
        let r = l.row();
        assert_eq!(r.int_u_sq, 0.0);
        assert_eq!(r.int_grad_log_u1_sq, 0.0);

        let c = State::new(Field::constant(&g, 1.5), Field::constant(&g, 2.0), 0.0);
        let d = State::new(Field::constant(&g, 1.2), Field::constant(&g, 1.9), 0.1);
        let mut l = EstimateLedger::new(&c, &g, &p);
        l.accumulate(&c, &d, 0.1, &g, &p);
        let r = l.row();
        for x in [
            r.int_grad_log_v_sq,
            r.int_grad_log_u1_sq,
            r.int_grad_u_l1,
            r.int_lap_v_sq,
        ] {
            assert_eq!(x, 0.0);
        }
        assert!(r.int_u_sq > 0.0 && r.int_vt_sq > 0.0);
    }

    #[test]
    fn empty_population_keeps_full_margins_and_exact_identity() {
        let (g, _, v0) = standard_1d(32);
        let p = ModelParams::new(2.0, 0.0, 0.5, 0.1, 0.2).unwrap();
        let u0 = Field::zeros(&g);
        let b = bounds_from_data(&u0, &v0, &p, &g, 0.2).unwrap();
        let traj = run(u0, v0, &p, &g, &StepConfig::default()).unwrap();
        let rep = check(&traj.ledger.row(), &b, g.max_spacing()).unwrap();
        for id in ["C1_mass", "C2_u_sq", "C4_grad_log_u1", "C5_grad_u_l1"] {
            let e = rep.get(id).unwrap();
            assert_eq!(e.margin, e.bound, "{id}");
        }
        assert_eq!(consumption_vs_mass_check(&traj.ledger.row(), &b), b.c1 * b.t_end);
    }

    #[test]
    fn uniform_data_identity_is_exact() {
        let g = build_grid(1, &[(0.0, 1.0)], &[16]).unwrap();
        let p = ModelParams::new(0.0, 0.0, 1.0, 0.1, 0.5).unwrap();
        let traj = run(
            Field::zeros(&g),
            Field::constant(&g, 2.0),
            &p,
            &g,
            &StepConfig::default(),
        )
        .unwrap();
        assert!(log_mass_identity_residual(&traj).abs() < 1e-14);
    }

    #[test]
    fn standard_run_passes_every_check_and_margins_shrink() {
        let (g, u0, v0) = standard_1d(64);
        let p = ModelParams::new(2.0, 1.0, 0.5, 0.1, 1.0).unwrap();
        let b = bounds_from_data(&u0, &v0, &p, &g, 1.0).unwrap();
        let cfg = StepConfig {
            dt_max: 2e-3,
            cfl_safety: 0.5,
            snapshot_every: 0.05,
        };
        let traj = run(u0, v0, &p, &g, &cfg).unwrap();
        let mut prev: Option<CheckReport> = None;
        for row in &traj.ledger_rows {
            let rep = check(row, &b, g.max_spacing()).unwrap();
            assert!(rep.all_pass(), "{rep:?}");
            if let Some(prev) = &prev {
                for (a, c) in prev.entries.iter().zip(&rep.entries) {
                    assert!(c.margin <= a.margin, "{} regained margin", c.lemma_id);
                }
            }
            prev = Some(rep);
        }
        assert!(consumption_vs_mass_check(&traj.ledger.row(), &b) >= 0.0);
    }

    #[test]
    fn check_report_csv_has_schema() {
        let (g, u0, v0) = standard_1d(16);
        let p = ModelParams::new(2.0, 1.0, 0.5, 0.1, 1.0).unwrap();
        let b = bounds_from_data(&u0, &v0, &p, &g, 1.0).unwrap();
        let l = EstimateLedger::new(&State::new(u0, v0, 0.0), &g, &p);
        let rep = check(&l.row(), &b, g.max_spacing()).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("lemma_id,value,bound,margin,pass\n"));
        assert_eq!(text.lines().count(), 1 + rep.entries.len());
    }

    proptest! {
        #[test]
        fn constants_nondecreasing_in_horizon(
            u in prop::collection::vec(0.0f64..4.0, 8),
            v in prop::collection::vec(0.1f64..3.0, 8),
            chi in 0.0f64..5.0, kappa in 0.0f64..3.0, mu in 0.05f64..3.0,
            t1 in 0.0f64..5.0, dt in 0.0f64..5.0,
        ) {
            let g = build_grid(1, &[(0.0, 1.3)], &[8]).unwrap();
            let (u, v) = (Field::new(&g, u).unwrap(), Field::new(&g, v).unwrap());
            let p = ModelParams::new(chi, kappa, mu, 0.1, t1 + dt).unwrap();
            let a = bounds_from_data(&u, &v, &p, &g, t1).unwrap();
            let b = bounds_from_data(&u, &v, &p, &g, t1 + dt).unwrap();
            for ((name, x), (_, y)) in a.table().iter().zip(b.table().iter()) {
                prop_assert!(*y >= *x * (1.0 - 1e-14), "{name}: {x} -> {y}");
                prop_assert!(x.is_finite() && *x >= 0.0);
            }
        }

        #[test]
        fn accumulators_never_decrease(
            steps in prop::collection::vec((prop::collection::vec(0.0f64..3.0, 6), prop::collection::vec(0.1f64..3.0, 6), 1e-4f64..0.1), 1..6),
        ) {
            let g = build_grid(1, &[(0.0, 1.0)], &[6]).unwrap();
            let p = ModelParams::new(1.0, 1.0, 1.0, 0.1, 10.0).unwrap();
            let mut prev = State::new(Field::constant(&g, 1.0), Field::constant(&g, 1.0), 0.0);
            let mut l = EstimateLedger::new(&prev, &g, &p);
            for (u, v, dt) in steps {
                let before = l.row();
                let next = State::new(Field::new(&g, u).unwrap(), Field::new(&g, v).unwrap(), prev.t + dt);
                l.accumulate(&prev, &next, dt, &g, &p);
                let after = l.row();
                let pairs = [
                    (before.int_u, after.int_u), (before.int_u_sq, after.int_u_sq),
                    (before.int_grad_log_v_sq, after.int_grad_log_v_sq),
                    (before.int_grad_log_u1_sq, after.int_grad_log_u1_sq),
                    (before.int_grad_u_l1, after.int_grad_u_l1), (before.int_lap_v_sq, after.int_lap_v_sq),
                    (before.int_vt_sq, after.int_vt_sq), (before.int_log_v_sq, after.int_log_v_sq),
                    (before.int_consumption, after.int_consumption),
                    (before.int_consumption_rate, after.int_consumption_rate),
                    (before.sup_mass, after.sup_mass), (before.sup_grad_v_l2, after.sup_grad_v_l2),
                    (before.sup_log_v_l1, after.sup_log_v_l1),
                ];
                for (x, y) in pairs {
                    prop_assert!(y >= x && y.is_finite());
                }
                prev = next;
            }
        }
    }
}
