use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate})")]
    NoConvergence { iterations: usize, estimate: f64 },

    #[error("policy iteration did not converge after {iterations} iterations (last distance {last_distance:e})")]
    PolicyNoConvergence {
        iterations: usize,
        last_distance: f64,
        trace: Vec<f64>,
    },

    #[error("assumption gate failed: {0}")]
    AssumptionGate(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("undefined tail exponent: {0}")]
    UndefinedExponent(String),

    #[error("fingerprint mismatch: policy was solved for model {policy}, config describes {model}")]
    Fingerprint { policy: String, model: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
