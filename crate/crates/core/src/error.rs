use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point {t} does not belong to the time scale")]
    PointNotInScale { t: f64 },

    #[error("no controlling time at or before {t}")]
    EmptyPredecessor { t: f64 },

    #[error("invalid range [{c}, {d})")]
    InvalidRange { c: f64, d: f64 },

    #[error("invalid step size {h}")]
    InvalidStep { h: f64 },

    #[error("invalid time scale: {0}")]
    InvalidScale(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("control {value:?} violates the admissible box")]
    ConstraintViolation { value: Vec<f64> },

    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("trajectory, control and adjoint are not defined on the same grid")]
    GridMismatch,

    #[error("time {t} is not a {expected} controlling time")]
    WrongPointClass { t: f64, expected: &'static str },

    #[error("argument {x} outside the domain of the kernel")]
    OutOfDomain { x: f64 },

    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    #[error("no convergence after {iterations} iterations (projected gradient {gradient:e})")]
    NoConvergence { iterations: usize, gradient: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
