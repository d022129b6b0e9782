use thiserror::Error;

/// Errors raised across the registration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter or inconsistent inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two operands live on different grids or geometries.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// An object was used before it reached the required state.
    #[error("invalid state: {0}")]
    State(String),

    /// Non-positive Jacobian determinant or non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Signal or noise has zero variance.
    #[error("SNR undefined: {0}")]
    UndefinedSnr(String),

    /// PSNR of identical images.
    #[error("PSNR is infinite: images are identical")]
    InfinitePsnr,

    /// Malformed binary or text file.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
