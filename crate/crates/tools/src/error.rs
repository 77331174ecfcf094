use std::io;
use std::path::PathBuf;

use sparsity_core::CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Container file parse failures.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("malformed header length: declared {declared} bytes, {available} available")]
    HeaderLength { declared: u64, available: u64 },
    #[error("header is not valid UTF-8")]
    InvalidUtf8,
    #[error("header is not a valid JSON object: {0}")]
    InvalidJson(String),
    #[error("invalid __metadata__: expected a string-to-string object")]
    InvalidMetadata,
    #[error("tensor '{tensor}': invalid entry: {reason}")]
    InvalidEntry { tensor: String, reason: String },
    #[error("tensor '{tensor}': unknown dtype '{dtype}'")]
    UnknownDtype { tensor: String, dtype: String },
    #[error("tensor '{tensor}': shape must contain only positive dimensions")]
    InvalidShape { tensor: String },
    #[error(
        "tensor '{tensor}': size mismatch: shape needs {expected} bytes, range holds {actual}"
    )]
    SizeMismatch {
        tensor: String,
        expected: u64,
        actual: u64,
    },
    #[error("overlapping ranges: tensors '{first}' and '{second}'")]
    OverlappingRanges { first: String, second: String },
    #[error("tensor '{tensor}': data is not contiguous with the previous tensor")]
    NonContiguous { tensor: String },
    #[error("tensor '{tensor}': byte range is out of bounds")]
    OutOfBounds { tensor: String },
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(u64),
    #[error("tensor name '{0}' is reserved")]
    ReservedName(String),
}

/// Mask file parse failures.
#[derive(Debug, thiserror::Error)]
pub enum MaskFileError {
    #[error("bad magic: not a mask file")]
    BadMagic,
    #[error("unsupported mask file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed header length: declared {declared} bytes, {available} available")]
    HeaderLength { declared: u64, available: u64 },
    #[error("invalid mask header: {0}")]
    InvalidHeader(String),
    #[error("tensor '{tensor}': bit length inconsistency: {reason}")]
    BitLength { tensor: String, reason: String },
    #[error("tensor '{tensor}': header nnz {header} disagrees with popcount {counted}")]
    NnzMismatch {
        tensor: String,
        header: u64,
        counted: u64,
    },
    #[error("tensor name '{0}' is reserved")]
    ReservedName(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    MaskFile(#[from] MaskFileError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("unknown tensor '{0}'")]
    UnknownTensor(String),
    #[error("invalid pattern '{pattern}': {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("source digest mismatch: mask was built from {expected}, container is {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("invalid curve: {0}")]
    Curve(String),
    #[error("invalid series manifest: {0}")]
    Manifest(String),
    #[error("series entry at iteration {iteration} ({path}): {source}")]
    SeriesEntry {
        iteration: u64,
        path: PathBuf,
        source: Box<Error>,
    },
    #[error("invalid rules: {0}")]
    Rules(String),
    #[error("invalid synth spec: {0}")]
    Synth(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::File { path, source }
    }
}
