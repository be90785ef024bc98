use std::path::PathBuf;

use crate::patchdata::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid state: density {density}, pressure {pressure}")]
    InvalidState { density: f64, pressure: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of bounds: patch {patch}, cell {cell:?}, unknown {unknown}")]
    IndexOutOfBounds {
        patch: usize,
        cell: Cell,
        unknown: usize,
    },

    #[error("workgroup of {required} lanes exceeds the limit of {limit}; break the patch down")]
    WorkgroupLimitExceeded { required: usize, limit: usize },

    #[error("task graph has a cycle ({unresolved} nodes never became ready)")]
    CycleDetected { unresolved: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("failed to allocate {bytes} bytes")]
    Allocation { bytes: usize },

    #[error("verification failed for {config}: {location} expected {expected:e}, got {actual:e}")]
    VerifyMismatch {
        config: String,
        location: String,
        expected: f64,
        actual: f64,
    },

    #[error("malformed batch dump: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}
