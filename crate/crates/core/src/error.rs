//! Error types shared across the workspace.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector argument had the wrong length for the operation.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    /// A fitness or feature value was NaN or infinite.
    #[error("non-finite {what} in candidate evaluation")]
    NonFinite { what: &'static str },

    /// An operation that needs at least one occupied bin ran on an empty archive.
    #[error("archive {archive} has no occupied bins")]
    EmptyArchive { archive: String },

    /// A pointer could not be resolved because the target archive is empty.
    #[error("unresolved pointer into archive {archive}")]
    UnresolvedPointer { archive: String },

    /// The simulation state became non-finite.
    #[error("simulation diverged at t = {t} s")]
    Diverged { t: f64 },

    /// Bad or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Export requested for an archive shape the exporter does not support.
    #[error("unsupported export: {0}")]
    UnsupportedExport(String),

    /// Persisted state could not be read back.
    #[error("failed to load {path}: {reason}")]
    Load { path: String, reason: String },

    /// Seeding could not produce an evaluable genome within the retry limit.
    #[error("seeding failed for {archive}: {reason}")]
    Seeding { archive: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration rather than a run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
