use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    QubitOutOfRange { index: usize, n_qubits: usize },

    #[error("control and target are both qubit {0}")]
    ControlIsTarget(usize),

    #[error("register of {0} qubits exceeds the supported maximum of 12")]
    TooManyQubits(usize),

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("angle source {kind} index {index} unresolved (only {available} values supplied)")]
    UnresolvedAngle {
        kind: &'static str,
        index: usize,
        available: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at epoch {epoch} (parameter norm {param_norm:.4e})")]
    NonFiniteLoss { epoch: usize, param_norm: f64 },

    #[error("empty predicted class {0}: efficiency undefined")]
    EmptyPredictedClass(usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model fit failed: {0}")]
    FitFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
