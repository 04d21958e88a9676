use thiserror::Error;

/// Errors produced anywhere in the solver and its verification engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("face value of v is not positive ({value:e}) on axis {axis}, face {face}")]
    NonPositiveSignal { axis: usize, face: usize, value: f64 },

    #[error("invariant breach at t = {t:e}: {what}")]
    InvariantBreach { t: f64, what: String },

    #[error("time step collapsed to {dt:e} at t = {t:e} (stiffness abort)")]
    StepCollapse { t: f64, dt: f64 },

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("config rejected: {0}")]
    ConfigInvalid(String),

    #[error("snapshot rejected at byte offset {offset}: {message}")]
    Snapshot { offset: u64, message: String },

    #[error("test function rejected: {0}")]
    TestFunction(String),

    #[error("quadrature: {0}")]
    Quadrature(String),

    #[error("sweep: {0}")]
    Sweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
