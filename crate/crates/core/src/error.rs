//! Crate-wide error type with CLI exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid or inconsistent configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Bad input data (ingestion, missing files, malformed datasets).
    #[error("data error: {0}")]
    Data(String),

    /// A contrastive batch needs at least 3 samples to draw distinct pairs.
    #[error("insufficient batch: need at least 3 samples, got {0}")]
    InsufficientBatch(usize),

    /// Training produced non-finite values.
    #[error("training diverged: {0}")]
    Diverged(String),

    /// Container file does not start with the expected magic bytes.
    #[error("bad magic bytes: not a CMI1 container")]
    BadMagic,

    /// Container version is not supported by this build.
    #[error("container version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    /// Container ended before all declared content was read.
    #[error("truncated container: {0}")]
    Truncated(String),

    /// An internal API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 usage/config, 2 data, 3 training diverged.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Diverged(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
