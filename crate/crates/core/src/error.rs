use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are supported)")]
    UnsupportedDimension(usize),
    #[error("resolution m = {m} exceeds the ceiling {max} for dimension {n}")]
    ResolutionTooFine { n: usize, m: u32, max: u32 },
    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),
    #[error("invalid exponent field: {0}")]
    InvalidExponent(String),
    #[error("invalid weight field: {0}")]
    InvalidWeight(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("zero-volume region")]
    ZeroVolume,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("t-grid too coarse to bracket the crossing after {0} points")]
    GridTooCoarse(usize),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
