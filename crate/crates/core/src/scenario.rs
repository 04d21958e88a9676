//! Grid specifications, named initial-data profiles and the bundle of
//! everything one solver run needs.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, Field, Grid};
use crate::model::ModelParams;
use crate::snapshot::read_snapshot;
use crate::stepper::{run, StepConfig, Trajectory};

/// Declarative form of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        if self.lower.len() != self.dim || self.upper.len() != self.dim {
            return Err(Error::InvalidGrid(format!(
                "lower/upper need {} entries, got {} and {}",
                self.dim,
                self.lower.len(),
                self.upper.len()
            )));
        }
        let extents: Vec<_> = self.lower.iter().copied().zip(self.upper.iter().copied()).collect();
        build_grid(self.dim, &extents, &self.cells)
    }

    /// Same rectangle with every cell count multiplied by `2^level`.
    pub fn refined(&self, level: u32) -> GridSpec {
        GridSpec {
            cells: self.cells.iter().map(|n| n << level).collect(),
            ..self.clone()
        }
    }
}

/// Which field a profile initializes; positivity rules differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Density,
    Signal,
}

/// Named initial profile sampled at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    Constant {
        value: f64,
    },
    /// `floor + amplitude · exp(−|x − center|² / (2 width²))`.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        floor: f64,
    },
    /// `offset + amplitude · ∏ cos(mode_i π (x_i − a_i) / L_i)`.
    Cosine {
        mode: Vec<u32>,
        amplitude: f64,
        offset: f64,
    },
    /// The matching field of a snapshot file.
    File {
        path: PathBuf,
    },
}

impl Profile {
    /// Lower bound of the profile implied by its parameters, if analytic.
    fn analytic_floor(&self) -> Option<f64> {
        match self {
            Profile::Constant { value } => Some(*value),
            Profile::GaussianBump { floor, .. } => Some(*floor),
            Profile::Cosine { amplitude, offset, .. } => Some(offset - amplitude.abs()),
            Profile::File { .. } => None,
        }
    }

    /// Samples the profile on `g` and enforces `u ≥ 0` or `v > 0`.
    pub fn sample(&self, g: &Grid, role: Role) -> Result<Field> {
        let name = match role {
            Role::Density => "u0",
            Role::Signal => "v0",
        };
        let reject = |msg: String| Err(Error::InvalidInitialData(format!("{name}: {msg}")));
        let field = match self {
            Profile::Constant { value } => {
                if !value.is_finite() {
                    return reject("constant must be finite".into());
                }
                Field::constant(g, *value)
            }
            Profile::GaussianBump {
                center,
                width,
                amplitude,
                floor,
            } => {
                if center.len() != g.dim() {
                    return reject(format!("center needs {} coordinates", g.dim()));
                }
                if !(*width > 0.0) {
                    return reject(format!("width {width} must be > 0"));
                }
                if !(*amplitude >= 0.0) {
                    return reject(format!("amplitude {amplitude} must be >= 0"));
                }
                let c = [center[0], center.get(1).copied().unwrap_or(0.0)];
                let dim = g.dim();
                Field::from_fn(g, |x| {
                    let r2: f64 = (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum();
                    floor + amplitude * (-r2 / (2.0 * width * width)).exp()
                })
            }
            Profile::Cosine {
                mode,
                amplitude,
                offset,
            } => {
                if mode.len() != g.dim() {
                    return reject(format!("mode needs {} entries", g.dim()));
                }
                let k: Vec<f64> = (0..g.dim())
                    .map(|a| mode[a] as f64 * std::f64::consts::PI / g.length(a))
                    .collect();
                let lo = [g.lower(0), g.lower(1)];
                Field::from_fn(g, |x| {
                    offset
                        + amplitude
                            * k.iter()
                                .enumerate()
                                .map(|(a, ka)| (ka * (x[a] - lo[a])).cos())
                                .product::<f64>()
                })
            }
            Profile::File { path } => {
                let snap = read_snapshot(path)?;
                let state = snap.into_state(g)?;
                match role {
                    Role::Density => state.u,
                    Role::Signal => state.v,
                }
            }
        };
        if !field.is_finite() {
            return reject("profile produced non-finite values".into());
        }
        match role {
            Role::Density if field.min() < 0.0 => {
                reject(format!("must be nonnegative, minimum on the grid is {}", field.min()))
            }
            Role::Signal if self.analytic_floor().is_some_and(|f| !(f > 0.0)) => reject(format!(
                "signal floor {} must be positive throughout the domain",
                self.analytic_floor().unwrap()
            )),
            Role::Signal if !(field.min() > 0.0) => reject(format!(
                "must be positive throughout the domain, minimum on the grid is {}",
                field.min()
            )),
            _ => Ok(field),
        }
    }

    /// Value of a spatially constant profile.
    pub fn uniform_value(&self) -> Option<f64> {
        match self {
            Profile::Constant { value } => Some(*value),
            Profile::GaussianBump { amplitude, floor, .. } if *amplitude == 0.0 => Some(*floor),
            Profile::Cosine {
                mode,
                amplitude,
                offset,
            } if mode.iter().all(|&m| m == 0) => Some(offset + amplitude),
            Profile::Cosine { amplitude, offset, .. } if *amplitude == 0.0 => Some(*offset),
            _ => None,
        }
    }
}

/// Samples both initial fields on `g`.
pub fn build_initial_data(u0: &Profile, v0: &Profile, g: &Grid) -> Result<(Field, Field)> {
    Ok((u0.sample(g, Role::Density)?, v0.sample(g, Role::Signal)?))
}

/// Everything needed for one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub model: ModelParams,
    pub stepping: StepConfig,
    pub u0: Profile,
    pub v0: Profile,
}

impl Scenario {
    pub fn build(&self) -> Result<(Grid, Field, Field)> {
        let g = self.grid.build()?;
        let (u0, v0) = build_initial_data(&self.u0, &self.v0, &g)?;
        Ok((g, u0, v0))
    }

    pub fn run(&self) -> Result<Trajectory> {
        let (g, u0, v0) = self.build()?;
        run(u0, v0, &self.model, &g, &self.stepping)
    }

    /// 1D unit interval, 256 cells, Gaussian cell bump in a cosine signal.
    pub fn standard() -> Scenario {
        Scenario {
            grid: GridSpec {
                dim: 1,
                lower: vec![0.0],
                upper: vec![1.0],
                cells: vec![256],
            },
            model: ModelParams {
                chi: 2.0,
                kappa: 1.0,
                mu: 0.5,
                eps: 0.1,
                t_end: 1.0,
            },
            stepping: StepConfig::default(),
            u0: Profile::GaussianBump {
                center: vec![0.5],
                width: 0.1,
                amplitude: 2.0,
                floor: 0.0,
            },
            v0: Profile::Cosine {
                mode: vec![1],
                amplitude: 0.3,
                offset: 1.0,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::State;
    use crate::snapshot::write_snapshot;
    use approx::assert_relative_eq;

    fn line() -> Grid {
        build_grid(1, &[(0.0, 1.0)], &[16]).unwrap()
    }

    #[test]
    fn constant_profile() {
        let f = Profile::Constant { value: 1.0 }.sample(&line(), Role::Density).unwrap();
        assert!(f.values().iter().all(|&x| x == 1.0));
        assert!(Profile::Constant { value: 0.0 }.sample(&line(), Role::Signal).is_err());
    }

    #[test]
    fn negative_gaussian_density_is_rejected() {
        let p = Profile::GaussianBump {
            center: vec![0.5],
            width: 0.1,
            amplitude: -1.0,
            floor: 0.0,
        };
        assert!(p.sample(&line(), Role::Density).is_err());
        let p = Profile::GaussianBump {
            center: vec![0.5],
            width: 0.1,
            amplitude: 1.0,
            floor: 0.0,
        };
        assert!(
            p.sample(&line(), Role::Signal).is_err(),
            "signal needs a positive floor"
        );
    }

    #[test]
    fn cosine_signal_minimum() {
        let g = build_grid(1, &[(0.0, 1.0)], &[1000]).unwrap();
        let p = Profile::Cosine {
            mode: vec![1],
            amplitude: 0.3,
            offset: 1.0,
        };
        let f = p.sample(&g, Role::Signal).unwrap();
        assert!(f.min() > 0.7 && f.min() < 0.7 + 1e-5);
        let low = Profile::Cosine {
            mode: vec![1],
            amplitude: 1.0,
            offset: 1.0,
        };
        assert!(low.sample(&g, Role::Signal).is_err());
    }

    #[test]
    fn gaussian_values() {
        let g = build_grid(2, &[(0.0, 1.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let p = Profile::GaussianBump {
            center: vec![0.125, 0.375],
            width: 0.5,
            amplitude: 2.0,
            floor: 0.25,
        };
        let f = p.sample(&g, Role::Signal).unwrap();
        assert_relative_eq!(f.values()[g.index(0, 1)], 2.25);
        let r2: f64 = 0.5 * 0.5 + 0.25 * 0.25;
        assert_relative_eq!(f.values()[g.index(2, 2)], 0.25 + 2.0 * (-r2 / 0.5).exp());
    }

    #[test]
    fn file_profile_reads_matching_field() {
        let g = line();
        let s = State::new(Field::from_fn(&g, |x| x[0]), Field::from_fn(&g, |x| 1.0 + x[0]), 0.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("init.chsn");
        write_snapshot(&s, &g, &path).unwrap();
        let p = Profile::File { path };
        let (u, v) = build_initial_data(&p, &p, &g).unwrap();
        assert_eq!(u, s.u);
        assert_eq!(v, s.v);
    }

    #[test]
    fn refined_grid_spec() {
        let spec = GridSpec {
            dim: 2,
            lower: vec![0.0, 0.0],
            upper: vec![1.0, 2.0],
            cells: vec![4, 8],
        };
        assert_eq!(spec.refined(2).cells, vec![16, 32]);
        assert_eq!(
            spec.refined(2).build().unwrap().cell_volume(),
            spec.build().unwrap().cell_volume() / 16.0
        );
    }
}
