use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid {nx}x{ny}x{nz}: {reason}")]
    InvalidGrid {
        nx: usize,
        ny: usize,
        nz: usize,
        reason: &'static str,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown DMA topology `{0}`")]
    UnknownTopology(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("failed to parse parameter file")]
    Params(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
