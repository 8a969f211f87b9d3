use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole encountered: {0}")]
    Pole(String),
    #[error("size guard: {0}")]
    Size(String),
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("solver failed after {iterations} iterations (residual {residual:.3e})")]
    Solver {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },
    #[error("accuracy target missed: estimate {estimate:.3e} above {tolerance:.3e}")]
    Accuracy { estimate: f64, tolerance: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
