//! Finite-volume solver for the ε-regularized singular-sensitivity
//! chemotaxis system with logistic source, together with runtime monitors
//! for its a priori estimates and a weak-form residual auditor.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod convergence;
pub mod error;
pub mod estimates;
pub mod grid;
pub mod model;
pub mod scenario;
pub mod snapshot;
pub mod stepper;
pub mod tridiag;
pub mod weakform;

pub use error::{Error, Result};

/// Formats a number with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}
