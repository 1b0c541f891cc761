//! Error type shared by every module of the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A vector or matrix had the wrong size for the operation.
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// One or more configuration constraints were violated. Every violation
    /// is collected so the caller can report them all at once.
    #[error("invalid configuration: {}", violations.join("; "))]
    InvalidConfig { violations: Vec<String> },

    /// A computation produced NaN or infinity.
    #[error("numerical blow-up in {context} at step {step}")]
    NumericalBlowUp { context: String, step: usize },

    /// An input that must be finite contained NaN or infinity.
    #[error("non-finite values in {what}")]
    NonFiniteInput { what: &'static str },

    /// A filter covariance left the positive-semidefinite cone by more than
    /// the repair tolerance.
    #[error("covariance not positive semidefinite at step {step} (min eigenvalue {min_eig:.3e})")]
    CovarianceNotPsd { step: usize, min_eig: f64 },

    /// The innovation covariance could not be factorized.
    #[error("singular innovation covariance at step {step}")]
    SingularInnovation { step: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Stored and recomputed payload checksums disagree; the artifact is
    /// corrupt and nothing was loaded.
    #[error("checksum mismatch in {path}: stored {stored:016x}, computed {computed:016x}")]
    ChecksumMismatch {
        path: String,
        stored: u64,
        computed: u64,
    },

    #[error("unsupported format version in {path}: found {found:?}")]
    UnsupportedVersion { path: String, found: String },

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },
}

impl Error {
    /// Helper for building an [`Error::InvalidConfig`] from collected
    /// violation messages. Returns `Ok(())` when the list is empty.
    pub fn check_violations(violations: Vec<String>) -> Result<()> {
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig { violations })
        }
    }
}
