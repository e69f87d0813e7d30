//! Error types shared across the crate.

use thiserror::Error;

/// Which admissibility constraint a candidate boundary profile violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// alpha(x1) below the lower value bound.
    ValueLow,
    /// alpha(x1) above the upper value bound.
    ValueHigh,
    /// |alpha'(x1)| above the first-derivative bound.
    SlopeBound,
    /// |alpha''(x1)| above the curvature bound.
    CurvatureBound,
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConstraintKind::ValueLow => "alpha < alpha_min",
            ConstraintKind::ValueHigh => "alpha > alpha_max",
            ConstraintKind::SlopeBound => "|alpha'| > C1",
            ConstraintKind::CurvatureBound => "|alpha''| > C2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum GeometryError {
    /// First admissibility violation found on the check grid.
    #[error("admissibility violated ({which}) at x1 = {x1}: value {value}")]
    ConstraintViolation {
        which: ConstraintKind,
        x1: f64,
        value: f64,
    },
    #[error("invalid admissible-set parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate cell: triangle {index} has signed area {area}")]
    DegenerateCell { index: usize, area: f64 },
    #[error("need at least 4 control values, got {0}")]
    TooFewControls(usize),
    #[error("mesh resolution must be at least 2, got ({nx}, {ny})")]
    MeshTooCoarse { nx: usize, ny: usize },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("slip radius phi must be nonnegative: phi[{index}] = {value}")]
    NonPositivePhi { index: usize, value: f64 },
    #[error("saddle-point factorization failed (singular system)")]
    SingularSaddle,
    #[error("flow states live on different spaces ({left} vs {right} velocity dofs)")]
    SpaceMismatch { left: usize, right: usize },
    #[error("invalid slip bound: {0}")]
    InvalidSlipBound(String),
    #[error("infeasible initial controls: {0}")]
    InfeasibleStart(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {message}")]
    InvalidValue { key: String, message: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
}

/// Top-level error for the runner and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
