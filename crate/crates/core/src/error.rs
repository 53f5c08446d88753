use thiserror::Error;

pub type Result<T> = std::result::Result<T, NlsError>;

#[derive(Debug, Error)]
pub enum NlsError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A mathematical hypothesis required by an operation does not hold
    /// for the supplied data (e.g. the weighted lower bound).
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("fixed-point iteration did not converge after {iterations} sweeps (last update {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("fixed-point iteration diverged at sweep {iterations} (update norms {history:?})")]
    Divergence { iterations: usize, history: Vec<f64> },

    #[error("blow-up guard tripped at t = {time:.6e}: sup norm {sup_norm:.3e}")]
    BlowUp { time: f64, sup_norm: f64 },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NlsError {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            NlsError::NonConvergence { .. } | NlsError::Divergence { .. } | NlsError::BlowUp { .. } => 2,
            NlsError::Io(_) | NlsError::Format(_) | NlsError::Json(_) => 3,
            _ => 1,
        }
    }
}
