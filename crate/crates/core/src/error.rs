use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (failed with diagonal jitter up to {jitter_tol:e})")]
    NotPositiveDefinite { jitter_tol: f64 },

    #[error("requested precision {requested:e} not reached within {evaluations} evaluations (standard error {achieved:e})")]
    PrecisionUnreachable {
        requested: f64,
        achieved: f64,
        evaluations: usize,
    },

    #[error("no root in [{lower}, {upper}]: objective has the same sign at both ends ({f_lower:e}, {f_upper:e})")]
    RootBracket {
        lower: f64,
        upper: f64,
        f_lower: f64,
        f_upper: f64,
    },

    #[error("optimizer failed to converge: {0}")]
    Convergence(String),

    #[error("sample size budget exceeded: power {power:.4} at N = {n} below target {target} (cap {cap})")]
    BudgetExceeded {
        n: u64,
        cap: u64,
        power: f64,
        target: f64,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero variance in arm `{arm}`")]
    ZeroVariance { arm: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
