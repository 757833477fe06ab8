//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by generators, datasets, classifiers, and the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition or input contract was violated by the caller.
    #[error("validation: {0}")]
    Validation(String),

    /// Sakoe-Chiba band too narrow for the given pair of sequence lengths.
    #[error("infeasible band: band {band} < length difference {gap}")]
    InfeasibleBand { band: usize, gap: usize },

    /// A dataset or checkpoint manifest is malformed or inconsistent.
    #[error("manifest: {0}")]
    Manifest(String),

    /// Stored payload does not match the shape promised by its manifest.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// CRC32 of a binary payload does not match its manifest.
    #[error("checksum mismatch: expected {expected:#010x}, got {actual:#010x}")]
    ChecksumMismatch { expected: u32, actual: u32 },

    /// Metrics requested on data that cannot define them (e.g. empty matrix).
    #[error("undefined metrics: {0}")]
    UndefinedMetrics(String),

    /// An API usage contract was broken, e.g. backward called without a
    /// saving forward pass.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether this error reflects bad caller input (as opposed to a runtime
    /// failure such as I/O or corrupted storage). The CLI maps the two
    /// classes to distinct exit codes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::InfeasibleBand { .. } | Error::UndefinedMetrics(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
