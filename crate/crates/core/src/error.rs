use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SeeError>;

#[derive(Debug, Error)]
pub enum SeeError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid system table: {0}")]
    InvalidTable(String),

    /// A transition set would become empty; the Lipschitz constant is
    /// below the true one or the model was not well-calibrated.
    #[error("calibration breach at pair {pair}: transition set of x={x:?}, u={u:?} would become empty")]
    CalibrationBreach { pair: usize, x: Vec<i32>, u: Vec<i32> },

    /// An extracted zone failed one of the feasibility properties.
    #[error("zone is not feasible: {0}")]
    InfeasibleZone(String),

    #[error("instance too large for exhaustive search: {pairs} pairs (cap {max_pairs}), {candidates} candidates per pair (cap {max_candidates})")]
    InstanceTooLarge {
        pairs: usize,
        max_pairs: usize,
        candidates: usize,
        max_candidates: usize,
    },

    #[error("recall is undefined for an empty baseline zone")]
    EmptyBaseline,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config validation failed:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("missing snapshot: {}", .0.display())]
    MissingSnapshot(PathBuf),

    #[error("malformed snapshot {}: {msg}", .path.display())]
    MalformedSnapshot { path: PathBuf, msg: String },

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SeeError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SeeError::Io {
            path: path.into(),
            source,
        }
    }
}
