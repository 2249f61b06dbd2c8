use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rotation is not orthonormal: {0}")]
    NonOrthonormalRotation(String),
    #[error("value out of range: {0}")]
    OutOfRangeValue(String),
    #[error("visibility mask has no overlap left to compare")]
    EmptyOverlap,
    #[error("timestep {t} outside 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("negative depth {0}")]
    NegativeDepth(f64),
    #[error("factor {factor} does not divide {height}x{width}")]
    NonDivisibleFactor {
        factor: usize,
        height: usize,
        width: usize,
    },
    #[error("generator failed at keyframe {index}: {source}")]
    GeneratorFailure {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("corrupt manifest {path}: {reason}")]
    CorruptManifest { path: PathBuf, reason: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name, used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::NonOrthonormalRotation(_) => "NonOrthonormalRotation",
            Error::OutOfRangeValue(_) => "OutOfRangeValue",
            Error::EmptyOverlap => "EmptyOverlap",
            Error::TimestepOutOfRange { .. } => "TimestepOutOfRange",
            Error::NegativeDepth(_) => "NegativeDepth",
            Error::NonDivisibleFactor { .. } => "NonDivisibleFactor",
            Error::GeneratorFailure { .. } => "GeneratorFailure",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::CorruptManifest { .. } => "CorruptManifest",
            Error::MissingFile(_) => "MissingFile",
            Error::Format { .. } => "Format",
            Error::Io(_) => "Io",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
