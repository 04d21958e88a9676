//! Right-hand sides of the ε-regularized chemotaxis system
//!
//! ```text
//! u_t = Δu − χ ∇·( u / ((1+εu) v) ∇v ) + κu − μu²
//! v_t = Δv − u v / ((1+εu)(1+εv))
//! ```
//!
//! with zero-flux boundaries. Everything here is a pure function of its
//! inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FaceField, Field, Grid};

/// Model coefficients and the integration horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Chemotactic sensitivity χ ≥ 0.
    pub chi: f64,
    /// Logistic growth rate κ ≥ 0.
    pub kappa: f64,
    /// Logistic damping μ > 0.
    pub mu: f64,
    /// Regularization ε > 0.
    pub eps: f64,
    /// Final time.
    pub t_end: f64,
}

impl ModelParams {
    pub fn new(chi: f64, kappa: f64, mu: f64, eps: f64, t_end: f64) -> Result<Self> {
        let p = ModelParams {
            chi,
            kappa,
            mu,
            eps,
            t_end,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the existence hypotheses χ ≥ 0, κ ≥ 0, μ > 0 together with
    /// ε > 0 and a finite nonnegative horizon.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.chi, self.kappa, self.mu, self.eps, self.t_end];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("all parameters must be finite".into()));
        }
        if self.chi < 0.0 {
            return Err(Error::InvalidParams(format!(
                "chi = {} violates the hypothesis chi >= 0",
                self.chi
            )));
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParams(format!(
                "kappa = {} violates the hypothesis kappa >= 0",
                self.kappa
            )));
        }
        if self.mu <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "mu = {} violates the hypothesis \"μ > 0 be arbitrary\" (mu > 0 required for logistic damping)",
                self.mu
            )));
        }
        if self.eps <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "eps = {} must be positive; the unregularized system is never time-stepped",
                self.eps
            )));
        }
        if self.t_end < 0.0 {
            return Err(Error::InvalidParams(format!("t_end = {} must be >= 0", self.t_end)));
        }
        Ok(())
    }
}

/// Cell density `u` and signal `v` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub u: Field,
    pub v: Field,
    pub t: f64,
}

impl State {
    pub fn new(u: Field, v: Field, t: f64) -> Self {
        State { u, v, t }
    }
}

/// κu − μu².
#[inline]
pub fn logistic_reaction(u: f64, p: &ModelParams) -> f64 {
    p.kappa * u - p.mu * u * u
}

/// Regularized consumption uv / ((1+εu)(1+εv)).
#[inline]
pub fn consumption(u: f64, v: f64, p: &ModelParams) -> f64 {
    u * v / ((1.0 + p.eps * u) * (1.0 + p.eps * v))
}

/// Per-unit-signal consumption rate u / ((1+εu)(1+εv)); bounded by 1/ε.
#[inline]
pub fn consumption_rate(u: f64, v: f64, eps: f64) -> f64 {
    u / ((1.0 + eps * u) * (1.0 + eps * v))
}

/// Saturated density u / (1+εu) transported by the chemotactic flux.
#[inline]
pub fn saturated_density(u: f64, eps: f64) -> f64 {
    u / (1.0 + eps * u)
}

#[inline]
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Donor-cell flux through one face.
///
/// `grad_v` is `(v_right - v_left) / h`. The transported density comes from
/// the cell the velocity points away from; the signal in the singular
/// factor is the harmonic mean of the two neighbours. Returns `None` if that
/// mean is not positive.
#[inline]
pub fn face_flux(u_left: f64, u_right: f64, v_left: f64, v_right: f64, grad_v: f64, chi: f64, eps: f64) -> Option<f64> {
    let v_face = harmonic_mean(v_left, v_right);
    if !(v_face > 0.0) {
        return None;
    }
    if grad_v == 0.0 || chi == 0.0 {
        return Some(0.0);
    }
    let donor = if grad_v > 0.0 { u_left } else { u_right };
    Some(chi * saturated_density(donor, eps) * grad_v / v_face)
}

/// Chemotactic flux on every face; boundary faces carry zero.
pub fn chemotactic_flux(state: &State, p: &ModelParams, g: &Grid) -> Result<FaceField> {
    let mut out = FaceField::zeros(g);
    let (u, v) = (state.u.values(), state.v.values());
    for axis in 0..g.dim() {
        let h = g.spacing(axis);
        let target = out.axis_mut(axis);
        let mut bad = None;
        g.for_each_interior_face(axis, |face, l, r| {
            if bad.is_some() {
                return;
            }
            let grad = (v[r] - v[l]) / h;
            match face_flux(u[l], u[r], v[l], v[r], grad, p.chi, p.eps) {
                Some(f) => target[face] = f,
                None => bad = Some((face, harmonic_mean(v[l], v[r]))),
            }
        });
        if let Some((face, value)) = bad {
            return Err(Error::NonPositiveSignal { axis, face, value });
        }
    }
    Ok(out)
}
