use thiserror::Error;

/// Errors raised by model construction, evaluation and time stepping.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite {what} at t = {t}, x = {x:?}")]
    NonFinite { what: String, t: f64, x: Vec<f64> },

    #[error("transformation matrix U is singular at t = {t}, x = {x:?}")]
    SingularTransform { t: f64, x: Vec<f64> },

    #[error("structure condition violated: {0}")]
    Structure(String),

    #[error(
        "Newton iteration did not converge in {iterations} iterations (last residual {residual:e})"
    )]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error(
        "singular iteration matrix at t = {t}; try a smaller step size or check the DAE index"
    )]
    SingularIteration { t: f64 },

    #[error("step {index} failed: {source}")]
    StepFailed { index: usize, source: Box<Error> },

    #[error("ambiguous differential/algebraic split: {0}; supply an explicit split mask")]
    AmbiguousSplit(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parse error at line {line} (block {block}): {message}")]
    Parse {
        line: usize,
        block: String,
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
