//! TOML run configuration: `[section]` headers, `key = value` lines,
//! unknown keys rejected.
//!
//! ```toml
//! [grid]
//! dim = 1
//! lower = [0.0]
//! upper = [1.0]
//! cells = [256]
//!
//! [model]
//! chi = 2.0
//! kappa = 1.0
//! mu = 0.5
//! eps = 0.1
//! t_end = 1.0
//!
//! [initial.u0]
//! profile = "gaussian_bump"
//! center = [0.5]
//! width = 0.1
//! amplitude = 2.0
//!
//! [initial.v0]
//! profile = "cosine"
//! mode = [1]
//! amplitude = 0.3
//! offset = 1.0
//! ```
//!
//! Every other section is optional; see the `Default` impls for values.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convergence::{DtScaling, Reference};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::ModelParams;
use crate::scenario::{GridSpec, Profile, Role, Scenario};
use crate::stepper::StepConfig;
use crate::weakform::{make_test_function, standard_suite, Temporal, TestFunction, DEFAULT_TOL_FACTOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub u0: Profile,
    pub v0: Profile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Root under which each subcommand writes its own directory.
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("out"),
        }
    }
}

/// One test function of the audit suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub id: String,
    pub temporal: Temporal,
    /// Cosine mode indices per axis; the second is ignored in 1D and must be 0.
    pub modes: Vec<[u32; 2]>,
    #[serde(default = "unit")]
    pub amplitude: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    /// Empty means the built-in six-function suite.
    pub functions: Vec<FunctionSpec>,
    pub tol_factor: f64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            functions: Vec::new(),
            tol_factor: DEFAULT_TOL_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Strictly decreasing, at least three entries.
    pub eps: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            eps: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineSpec {
    pub levels: usize,
    pub dt_scaling: DtScaling,
    pub reference: Reference,
}

impl Default for RefineSpec {
    fn default() -> Self {
        RefineSpec {
            levels: 3,
            dt_scaling: DtScaling::Linear,
            reference: Reference::Finest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Largest accepted relative endpoint error against the ODE oracle.
    pub rel_tol: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec { rel_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub model: ModelParams,
    #[serde(default)]
    pub stepping: StepConfig,
    pub initial: InitialSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub audit: AuditSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub refine: RefineSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte.min(text.len())].matches('\n').count() + 1
}

fn invalid(section: &str, e: impl std::fmt::Display) -> Error {
    Error::ConfigInvalid(format!("[{section}] {e}"))
}

fn deserialize(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().trim().to_string(),
    })
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg = deserialize(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file; relative profile paths are taken relative
/// to the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = deserialize(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for profile in [&mut cfg.initial.u0, &mut cfg.initial.v0] {
        if let Profile::File { path } = profile {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.grid.build().map_err(|e| invalid("grid", e))?;
        self.model.validate().map_err(|e| invalid("model", e))?;
        self.stepping.validate().map_err(|e| invalid("stepping", e))?;
        self.initial
            .u0
            .sample(&g, Role::Density)
            .map_err(|e| invalid("initial.u0", e))?;
        self.initial
            .v0
            .sample(&g, Role::Signal)
            .map_err(|e| invalid("initial.v0", e))?;

        if !(self.audit.tol_factor > 0.0) || !self.audit.tol_factor.is_finite() {
            return Err(invalid(
                "audit",
                format!("tol_factor = {} must be > 0", self.audit.tol_factor),
            ));
        }
        let mut ids = HashSet::new();
        for f in &self.audit.functions {
            if !ids.insert(f.id.as_str()) {
                return Err(invalid("audit", format!("duplicate test function id {:?}", f.id)));
            }
        }
        self.suite(&g).map_err(|e| invalid("audit", e))?;

        let eps = &self.sweep.eps;
        if eps.len() < 3 {
            return Err(invalid(
                "sweep",
                format!("eps needs at least 3 values, got {}", eps.len()),
            ));
        }
        if eps.iter().any(|e| !(*e > 0.0) || !e.is_finite()) || eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(invalid(
                "sweep",
                format!("eps {eps:?} must be positive and strictly decreasing"),
            ));
        }
        if self.refine.levels < 3 {
            return Err(invalid(
                "refine",
                format!("levels = {} must be >= 3", self.refine.levels),
            ));
        }
        if !(self.oracle.rel_tol > 0.0) || !self.oracle.rel_tol.is_finite() {
            return Err(invalid(
                "oracle",
                format!("rel_tol = {} must be > 0", self.oracle.rel_tol),
            ));
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            grid: self.grid.clone(),
            model: self.model,
            stepping: self.stepping,
            u0: self.initial.u0.clone(),
            v0: self.initial.v0.clone(),
        }
    }

    /// The configured audit suite on `g`, or the standard one.
    pub fn suite(&self, g: &Grid) -> Result<Vec<TestFunction>> {
        if self.audit.functions.is_empty() {
            return standard_suite(g, self.model.t_end);
        }
        self.audit
            .functions
            .iter()
            .map(|f| make_test_function(f.id.clone(), f.temporal, &f.modes, f.amplitude, g, self.model.t_end))
            .collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigInvalid(format!("cannot serialize: {e}")))
    }
}
