use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum QbError {
    #[error("argument error: {0}")]
    Argument(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("spectral mismatch: {0}")]
    SpectralMismatch(String),
    #[error("numerical inconsistency: {0}")]
    Numerical(String),
    #[error("vanishing success probability: p_succ = {0:e}")]
    VanishingSuccess(f64),
    #[error("support condition fails: {0}")]
    Invertibility(String),
    #[error("PPT violation: minimum eigenvalue of the partial transpose is {0:e}")]
    PptViolation(f64),
    #[error("search failure: {message} (best value {best_value})")]
    SearchFailure { message: String, best_value: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("construction error: {0}")]
    Construction(String),
    #[error("refused: {0}")]
    Refusal(String),
    #[error("cutoff error: {message}; try n_max >= {suggested}")]
    Cutoff { message: String, suggested: usize },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QbError>;
