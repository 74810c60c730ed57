use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("similarity {0} outside [0, 1]")]
    SimilarityOutOfRange(f64),
    #[error("no band configuration reaches probability {min_probability} at similarity {min_similarity}")]
    NoFeasibleConfig {
        min_similarity: f64,
        min_probability: f64,
    },
    #[error("invalid band configuration {0}")]
    InvalidBandConfig(String),
    #[error("cannot compute a MinHash signature of an empty shingle set")]
    EmptyShingleSet,
    #[error("signature has {got} values, configuration needs {expected}")]
    SignatureLengthMismatch { expected: usize, got: usize },
    #[error("record id {0} already inserted")]
    DuplicateRecordId(u32),

    #[error("dataset schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: u64, reason: String },
    #[error("{what}: bad magic bytes")]
    BadMagic { what: &'static str },
    #[error("{what}: format version {found}, expected {expected}")]
    VersionMismatch {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("{what}: checksum mismatch or truncated file")]
    ChecksumMismatch { what: &'static str },
    #[error("{what}: corrupt payload ({reason})")]
    Corrupt { what: &'static str, reason: String },
    #[error("record id {id} out of range (count {count})")]
    IdOutOfRange { id: u64, count: u64 },
    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("empty corpus")]
    EmptyCorpus,
    #[error("empty string")]
    EmptyString,
    #[error("coordinate ({lat}, {lon}) out of range")]
    CoordinateOutOfRange { lat: f64, lon: f64 },
    #[error("non-digit industry code {0:?}")]
    NonDigitInput(String),
    #[error("malformed gazetteer row {row}: {reason}")]
    MalformedGazetteerRow { row: u64, reason: String },

    #[error("query name is empty")]
    EmptyQueryName,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid ground truth: {0}")]
    InvalidGroundTruth(String),
    #[error("similarity {0} not representable with the configured set sizes")]
    InfeasibleSimilarity(f64),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Short machine-readable identifier used by the CLI and HTTP layers.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "Io",
            Error::SimilarityOutOfRange(_) => "SimilarityOutOfRange",
            Error::NoFeasibleConfig { .. } => "NoFeasibleConfig",
            Error::InvalidBandConfig(_) => "InvalidBandConfig",
            Error::EmptyShingleSet => "EmptyShingleSet",
            Error::SignatureLengthMismatch { .. } => "SignatureLengthMismatch",
            Error::DuplicateRecordId(_) => "DuplicateRecordId",
            Error::SchemaMismatch(_) => "SchemaMismatch",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::BadMagic { .. } => "BadMagic",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::ChecksumMismatch { .. } => "ChecksumMismatch",
            Error::Corrupt { .. } => "Corrupt",
            Error::IdOutOfRange { .. } => "IdOutOfRange",
            Error::InvalidRecord(_) => "InvalidRecord",
            Error::EmptyCorpus => "EmptyCorpus",
            Error::EmptyString => "EmptyString",
            Error::CoordinateOutOfRange { .. } => "CoordinateOutOfRange",
            Error::NonDigitInput(_) => "NonDigitInput",
            Error::MalformedGazetteerRow { .. } => "MalformedGazetteerRow",
            Error::EmptyQueryName => "EmptyQueryName",
            Error::Config(_) => "Config",
            Error::InvalidGroundTruth(_) => "InvalidGroundTruth",
            Error::InfeasibleSimilarity(_) => "InfeasibleSimilarity",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
