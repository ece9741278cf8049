use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("vector {index} has zero norm")]
    ZeroVector { index: usize },

    #[error("embedding of vector {index} is all zero (every bottleneck unit inactive)")]
    DeadEmbedding { index: usize },

    #[error("vector {index} contains a non-finite entry")]
    NonFinite { index: usize },

    #[error("vector must have at least one coordinate")]
    EmptyVector,

    #[error("invalid k = {0}: must be at least 1")]
    InvalidK(usize),

    #[error("invalid threshold {0}: must lie in [-1, 1]")]
    InvalidThreshold(f64),

    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),

    #[error("invalid neighbor map: {0}")]
    InvalidNeighborMap(String),

    #[error("row {row} has no neighbors and the top1 fallback needs a similarity matrix")]
    MissingSimilarity { row: usize },

    #[error("layer sizes {0:?} are not symmetric")]
    AsymmetricArchitecture(Vec<usize>),

    #[error("bad layer sizes {0:?}: need at least 3 layers, all of size >= 1")]
    BadLayerSize(Vec<usize>),

    #[error("parameter shapes do not match: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation at layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("epoch {epoch} out of range for {total} epochs")]
    EpochOutOfRange { epoch: usize, total: usize },

    #[error("invalid learning-rate schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid learning rate {0}")]
    InvalidLearningRate(f64),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("no training pairs")]
    EmptyPairs,

    #[error("index {index} out of range for {len} items")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("trial {trial}: vector {index} has zero norm")]
    ZeroVectorInTrial { trial: usize, index: usize },

    #[error("score set and trial list need both matched and mismatched trials")]
    SingleClass,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("score set is constant and cannot be normalized")]
    DegenerateNormalization,

    #[error("invalid fusion weights ({0}, {1}): need non-negative weights summing to 1")]
    InvalidWeights(f64, f64),

    #[error("invalid synthetic config: {0}")]
    InvalidSynthConfig(String),

    #[error("requested {requested} {kind} pairs but only {available} exist")]
    InsufficientPairs {
        kind: &'static str,
        requested: usize,
        available: usize,
    },

    #[error("corrupt header at byte {offset}: {reason}")]
    CorruptHeader { offset: u64, reason: String },

    #[error("truncated payload: expected {expected} bytes after offset {offset}, found {found}")]
    TruncatedPayload {
        offset: u64,
        expected: u64,
        found: u64,
    },

    #[error("line {line}: expected {expected} values, found {found}")]
    DimInconsistent {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("item {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteActivation { .. }
                | Error::NonFiniteLoss { .. }
                | Error::DeadEmbedding { .. }
                | Error::DegenerateNormalization
        )
    }
}
