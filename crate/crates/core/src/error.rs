use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the operators, optimizers and I/O helpers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("point {0:?} is not an interior point of the domain")]
    OutsideDomain(Vec<f64>),

    #[error("field has no compact support declaration")]
    MissingCompactSupport,

    #[error(
        "field cannot be evaluated at {location:?} outside its domain; declare a compact support to extend it by zero"
    )]
    NotExtendable { location: Vec<f64> },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("rejection sampler exceeded {attempts} attempts")]
    SamplerExhausted { attempts: usize },

    #[error("node budget exceeded: {requested} nodes requested, budget is {budget}")]
    NodeBudget { requested: usize, budget: usize },

    #[error("non-finite value at {location:?}")]
    NonFinite { location: Vec<f64> },

    #[error("principal value sequence diverges (levels {levels:?})")]
    PvDivergence { levels: Vec<f64> },

    #[error("difference quotient undefined for coincident points")]
    Coincident,

    #[error("missing derivative access: {0}")]
    MissingDerivative(&'static str),

    #[error("no sign change to bracket a vanishing subset around {x_star}")]
    NoBracket { x_star: f64 },

    #[error("singular Hessian at iteration {iteration} (condition estimate {condition:e})")]
    SingularHessian { iteration: usize, condition: f64 },

    #[error("iteration {iteration}: {source}")]
    AtIteration { iteration: usize, source: Box<Error> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown check `{0}`")]
    UnknownCheck(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Error {
        Error::Io {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
