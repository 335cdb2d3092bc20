//! Error type shared by all library modules.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A point cloud must contain at least one point.
    #[error("point cloud is empty")]
    EmptyCloud,

    /// A numeric input contained NaN or infinity.
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// A ground-truth label index points outside the label table.
    #[error("label index {index} out of range for table of {table_len} labels")]
    LabelIndexOutOfRange { index: u32, table_len: usize },

    /// An operation needed ground-truth labels the cloud does not carry.
    #[error("point cloud has no ground-truth labels")]
    MissingGroundTruth,

    /// Camera parameters failed validation.
    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    /// Sector partitioning requires at least one sector.
    #[error("sector count must be at least 1")]
    ZeroSectors,

    /// Pillar partitioning requires a positive cell side.
    #[error("pillar side must be positive, got {side}")]
    InvalidPillarSide { side: f64 },

    /// Two containers that must agree in dimension did not.
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// A text label was empty after canonicalization.
    #[error("label is empty after trimming")]
    EmptyLabel,

    /// A caption was empty after trimming.
    #[error("caption text is empty after trimming")]
    EmptyCaption,

    /// No sufficiently separated anchor could be drawn for a label.
    #[error("could not place a separated anchor for label {label:?}")]
    AnchorSaturation { label: String },

    /// The attention head count must divide the embedding dimension.
    #[error("head count {heads} does not divide embedding dimension {dim}")]
    HeadsDoNotDivide { heads: usize, dim: usize },

    /// Loss or pooling was requested over a batch whose masks are all empty.
    #[error("all masks in the batch are empty")]
    AllMasksEmpty,

    /// Training requires distillation targets on every batch.
    #[error("batch has no distillation targets")]
    MissingTargets,

    /// Training requires a non-empty dataset.
    #[error("training dataset is empty")]
    EmptyDataset,

    /// A lexicon file line could not be parsed.
    #[error("lexicon parse error at line {line}: {reason}")]
    LexiconParse { line: usize, reason: String },

    /// Decoding requires at least one tag.
    #[error("decode count k must be at least 1")]
    ZeroDecodeCount,

    /// An operation over a vocabulary needs at least one label.
    #[error("vocabulary is empty")]
    EmptyVocabulary,

    /// A prediction label is not covered by the vocabulary mapping.
    #[error("label {label:?} is not covered by the mapping")]
    UncoveredLabel { label: String },

    /// A class index exceeded the declared class count.
    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    /// A scene primitive had invalid extents.
    #[error("invalid primitive: {reason}")]
    InvalidPrimitive { reason: String },

    /// Underlying file I/O failure, with the offending path.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A binary blob did not start with its expected magic bytes.
    #[error("magic mismatch: expected {expected:?}, found {found:?}")]
    MagicMismatch {
        expected: &'static str,
        found: String,
    },

    /// A binary blob ended before its declared payload.
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    /// A binary blob carried bytes past its declared payload.
    #[error("trailing bytes: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },

    /// A declared record count implies a payload beyond the format limit.
    #[error("record count {count} overflows the format payload limit")]
    CountOverflow { count: u64 },

    /// A manifest referenced a file that does not exist.
    #[error("missing resource: {path}")]
    MissingResource { path: PathBuf },

    /// A manifest or JSON document violated the expected schema.
    #[error("schema violation: {reason}")]
    Schema { reason: String },

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse category used by callers that map errors to diagnostics,
    /// one of `"io"`, `"schema"`, or `"data"`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::MissingResource { .. } => "io",
            Error::MagicMismatch { .. }
            | Error::TruncatedPayload { .. }
            | Error::TrailingBytes { .. }
            | Error::CountOverflow { .. }
            | Error::Schema { .. }
            | Error::Json(_)
            | Error::LexiconParse { .. } => "schema",
            _ => "data",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(reason: impl Into<String>) -> Self {
        Error::Schema {
            reason: reason.into(),
        }
    }
}
