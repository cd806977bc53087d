use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("polynomial kernel degree must be a positive even integer, got {0}")]
    InvalidDegree(u32),

    #[error("kernel scale must be finite and nonnegative, got {0}")]
    InvalidScale(f64),

    #[error("kernel `{0}` has no finite feature map")]
    NoFeatureMap(String),

    #[error("feature dimension {dim} exceeds the per-node cap of {cap} entries")]
    FeatureDimTooLarge { dim: usize, cap: usize },

    #[error("cannot parse kernel `{0}` (expected uniform, softmax, quadratic[:ALPHA] or quartic[:ALPHA])")]
    UnknownKernel(String),

    #[error("embedding matrix must have at least one class")]
    NoClasses,

    #[error("embedding dimension must be positive")]
    ZeroDimension,

    #[error("class index {index} out of range for {n} classes")]
    ClassOutOfRange { index: usize, n: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("leaf capacity must be at least 1")]
    ZeroLeafCapacity,

    #[error("sampling probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),

    #[error("goodness-of-fit test needs at least {required} draws, got {actual}")]
    InsufficientDraws { required: u64, actual: u64 },

    #[error("instance too large to enumerate: n = {n}, m = {m} (limits n <= 10, m <= 4)")]
    EnumerationTooLarge { n: usize, m: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("sampling tree drifted from a fresh rebuild by {deviation:e} at epoch {epoch}")]
    TreeAudit { epoch: usize, deviation: f64 },

    #[error("bad embedding file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by a failure while
    /// running.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(
            self,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::TreeAudit { .. } | Error::Io(_) | Error::Csv(_)
        )
    }
}
