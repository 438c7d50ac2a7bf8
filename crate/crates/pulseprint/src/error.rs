//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Filter or transform produced non-finite values.
    #[error("numeric instability: {0}")]
    NumericInstability(String),

    /// Not enough usable signal for the requested operation.
    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    /// Within-class scatter is singular; plain LDA cannot run. Use DLDA.
    #[error(
        "small sample size: within-class scatter is singular \
         ({samples} samples for {features} features); use direct LDA"
    )]
    SmallSampleSize { features: usize, samples: usize },

    /// Training data carries no between-class signal (e.g. a single
    /// effective class).
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    /// Pearson distance of a constant vector is undefined.
    #[error("undefined correlation: at least one vector is constant")]
    UndefinedCorrelation,

    /// Autocorrelation of an all-zero window cannot be normalized.
    #[error("undefined normalization: window is identically zero")]
    UndefinedNormalization,

    #[error("unknown identity: {0:?} is not enrolled")]
    UnknownIdentity(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("enrollment failed: {0}")]
    Enrollment(String),

    #[error("manifest error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    /// A persisted model was built under a different configuration.
    #[error("model fingerprint {model} does not match run configuration fingerprint {run}")]
    FingerprintMismatch { model: String, run: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
