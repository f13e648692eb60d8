//! Crate-wide error type. Everything that can fail returns [`Result`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),

    #[error("unsupported dimension {0} (only dim = 2 is implemented)")]
    UnsupportedDimension(usize),

    #[error("domain: {0}")]
    Domain(String),

    #[error("particle {index} reflected {count} times in one step (cap {cap}); step too large or geometry degenerate")]
    ParticleEscaped {
        index: usize,
        count: usize,
        cap: usize,
    },

    #[error("numerical abort at step {step}: {context}")]
    NumericalAbort { step: u64, context: String },

    #[error("fixed-point loop did not converge after {iterations} iterations (last deltas {history:?})")]
    NonConvergence {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("stale moments: cache tagged step {tag}, state at step {step}")]
    StaleMoments { tag: u64, step: u64 },

    #[error("eigensolver: {0}")]
    Eigensolver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
