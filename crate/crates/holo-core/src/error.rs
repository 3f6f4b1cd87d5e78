use thiserror::Error;

/// Errors produced by the holography core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("grid dimensions must be powers of two, got {height}x{width}")]
    NonPowerOfTwo { height: usize, width: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at stage `{stage}`: {detail}")]
    Numeric { stage: &'static str, detail: String },

    #[error("modulation mode error: {0}")]
    Mode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact integrity error: {0}")]
    Integrity(String),

    #[error("unsupported artifact version {0}")]
    UnsupportedVersion(u16),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error stems from invalid inputs/configuration (as opposed
    /// to a runtime/numeric failure). CLI maps this to exit code 1 vs 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NonPowerOfTwo { .. }
                | Error::InvalidParameter(_)
                | Error::Domain(_)
                | Error::Mode(_)
                | Error::Config(_)
                | Error::EmptyDataset(_)
                | Error::UnsupportedVersion(_)
        )
    }
}
