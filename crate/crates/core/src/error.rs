use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation not defined for custom schemes: {0}")]
    CustomScheme(&'static str),

    #[error("degenerate polynomial: leading and linear coefficients are both zero")]
    DegeneratePolynomial,

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error(
        "newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem has no exact solution oracle")]
    MissingOracle,

    #[error("end time {t_end} is not an integer multiple of h = {h}")]
    NonCommensurate { t_end: f64, h: f64 },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl Error {
    /// Errors raised by the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::NewtonDivergence { .. } | Error::DegeneratePolynomial
        )
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { name, value })
    }
}
