use std::path::PathBuf;

use thiserror::Error;

/// Broad class of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters or configuration supplied by the caller.
    Usage,
    /// Input data is missing, malformed, or unsuitable for the operation.
    Data,
    /// A bug or an unexpected numerical/serialization failure.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no valid records in {0}")]
    NoValidRecords(String),

    #[error("{malformed} of {total} rows malformed in {path}; wrong format?")]
    TooManyMalformed {
        path: String,
        malformed: usize,
        total: usize,
    },

    #[error("duplicate article id {0:?}")]
    DuplicateId(String),

    #[error("invalid article: {0}")]
    InvalidArticle(String),

    #[error("site label map does not cover sources: {}", .0.join(", "))]
    UncoveredSources(Vec<String>),

    #[error("corpus needs both labels, found only label {0}")]
    SingleLabel(u8),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate outcome distribution: every outcome is {0}")]
    DegenerateOutcome(&'static str),

    #[error("non-finite feature value at example {0}")]
    NonFinite(usize),

    #[error("k = {k} exceeds vocabulary size {size}")]
    KTooLarge { k: usize, size: usize },

    #[error("ratios must sum to 1 (got {0})")]
    BadRatios(f64),

    #[error("too few {what}: need at least {need}, have {have}")]
    TooFew {
        what: &'static str,
        need: usize,
        have: usize,
    },

    #[error("empty set: {0}")]
    EmptySet(&'static str),

    #[error("site {0:?} has inconsistent labels")]
    InconsistentSiteLabels(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing label class {0} among training sites")]
    MissingLabelClass(u8),

    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Seed { source, .. } | Error::Stage { source, .. } => source.kind(),
            Error::BadRatios(_)
            | Error::InvalidParameter(_)
            | Error::Config { .. }
            | Error::KTooLarge { .. } => ErrorKind::Usage,
            Error::Internal(_) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn at_seed(self, seed: u64) -> Self {
        Error::Seed {
            seed,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
