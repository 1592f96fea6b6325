use std::path::PathBuf;

use crate::autodiff::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch { op: &'static str, lhs: Shape, rhs: Shape },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    #[error("{op}: reduction over an empty axis")]
    EmptyReduction { op: &'static str },
    #[error("shape has rank {0}, at most 3 supported")]
    RankTooLarge(usize),
    #[error("element count {count} does not match shape {shape}")]
    ElementCount { shape: Shape, count: usize },
    #[error("backward requires a scalar root, got shape {0}")]
    NonScalarRoot(Shape),
    #[error("invalid distribution parameters: {0}")]
    InvalidDistribution(String),

    #[error("aggregation over an empty population")]
    EmptyPopulation,
    #[error("aggregation weights must be non-negative")]
    InvalidWeights,
    #[error("sum isomorphism domain violation: {0}")]
    IsomorphismDomain(String),

    #[error("brute force limited to {max} points, got {n}")]
    TooLarge { n: usize, max: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("all EM restarts collapsed to zero variance")]
    DegenerateFit,
    #[error("kernel density estimate needs at least two samples with nonzero spread")]
    DegenerateKde,
    #[error("invalid population size range [{min}, {max}]")]
    InvalidRange { min: usize, max: usize },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed parameter blob at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("parameter blob was written for a different architecture (expected fingerprint {expected:016x}, found {found:016x})")]
    ArchitectureMismatch { expected: u64, found: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
