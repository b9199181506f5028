//! Error types shared across the toolkit.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while building or running an analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),

    #[error("column `{0}` present in the CSV but absent from the schema")]
    UnknownColumn(String),

    #[error("schema variable `{0}` missing from the CSV header")]
    MissingColumn(String),

    #[error("duplicate schema variable `{0}`")]
    DuplicateVariable(String),

    #[error("variable `{0}` uses a reserved outcome column name")]
    ReservedName(String),

    #[error("column `{0}` carries no temporal tag; tags are mandatory")]
    UntaggedColumn(String),

    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },

    #[error("all columns would be removed by the missingness filter")]
    AllColumnsRemoved,

    #[error("column `{0}` is entirely missing within the fit rows")]
    AllMissingColumn(String),

    #[error("column `{0}` contains a non-finite value")]
    NonFiniteValue(String),

    #[error("labels contain a single class")]
    SingleClassLabels,

    #[error("class with fewer than {0} members")]
    ClassTooSmall(usize),

    #[error("train fraction must lie strictly inside (0, 1)")]
    BadTrainFraction,

    #[error("minority class needs at least 2 members for oversampling, got {0}")]
    MinorityTooSmall(usize),

    #[error("recurrence event recorded without a progression time for `{0}`")]
    EventWithoutTime(String),

    #[error("volume/mask dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch((usize, usize, usize), (usize, usize, usize)),

    #[error("mask contains no foreground voxels")]
    EmptyMask,

    #[error("no valid voxel pairs for the co-occurrence matrix")]
    NoPairs,

    #[error("aligned inputs have mismatched lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model has not been fitted")]
    UnfittedModel,

    #[error("{0} did not converge: {1}")]
    NonConvergence(&'static str, String),

    #[error("more than half of the bootstrap resamples were degenerate ({degenerate}/{total})")]
    DegenerateResamples { degenerate: usize, total: usize },

    #[error("no usable pairs for the concordance index")]
    NoUsablePairs,

    #[error("survival times must be non-negative")]
    NegativeTime,

    #[error("subject `{0}` has an event at time zero")]
    EventAtTimeZero(String),

    #[error("empty sample")]
    EmptySample,

    #[error("contingency table is all zeros")]
    AllZeroTable,

    #[error("threshold probability must lie strictly inside (0, 1), got {0}")]
    BadThreshold(f64),

    #[error("cutoffs must be ordered ascending")]
    UnorderedCutoffs,

    #[error("io error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on `{path}`: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("json error on `{path}`: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn csv(path: impl AsRef<std::path::Path>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Exit-code class for the CLI: 2 for input problems, 3 for numerical
    /// non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence(..) => 3,
            _ => 2,
        }
    }
}
