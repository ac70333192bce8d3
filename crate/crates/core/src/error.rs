use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("non-finite value at voxel {index}")]
    NonFiniteData { index: usize },
    #[error("resampling would produce an empty axis (dims {0:?})")]
    DegenerateOutput([usize; 3]),
    #[error("mask has no foreground voxels")]
    EmptyMask,
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("malformed weights file: {0}")]
    MalformedWeights(String),
    #[error("non-finite weight at payload offset {0}")]
    NonFiniteWeights(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("spatial dims {0:?} are not divisible by the pooling window")]
    IndivisibleDims([usize; 3]),

    #[error("no samples to fit")]
    EmptySamples,
    #[error("component count must be at least 1, got {0}")]
    InvalidK(usize),
    #[error("feature vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("training set contains a single class")]
    SingleClassTraining,
    #[error("training set is empty")]
    EmptyTraining,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("both classes must be present")]
    SingleClass,

    #[error("no death events observed")]
    NoEvents,

    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),
    #[error("weights file missing: {0}")]
    WeightsMissing(PathBuf),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("median split of '{0}' yields a single class")]
    DegenerateLabels(String),
    #[error("unknown patient: {0}")]
    UnknownPatient(String),
    #[error("map index {0} out of range [0, 20]")]
    BadMapIndex(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
