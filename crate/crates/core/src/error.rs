use alloc::string::String;

/// Errors raised by the pure algorithms in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("empty mask set")]
    EmptySet,
    #[error("empty prunable set")]
    EmptyPrunableSet,
    #[error("non-finite weight in tensor '{tensor}' at index {index}")]
    NonFiniteWeight { tensor: String, index: usize },
    #[error("duplicate tensor name '{0}'")]
    DuplicateTensor(String),
    #[error("tensor '{tensor}' has an invalid shape")]
    InvalidShape { tensor: String },
    #[error("tensor '{tensor}': expected {expected} values, got {actual}")]
    ValueCount {
        tensor: String,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch for tensor '{tensor}'")]
    ShapeMismatch { tensor: String },
    #[error("tensor '{0}' is not present in both operands")]
    NameMismatch(String),
    #[error("mask bit length {actual} does not match shape element count {expected}")]
    MaskLength { expected: usize, actual: usize },
    #[error("cached nnz {cached} disagrees with popcount {counted}")]
    NnzMismatch { cached: u64, counted: u64 },
    #[error("all-zero mask has no defined cosine similarity")]
    AllZeroMask,
    #[error("at least two mask sets are required")]
    TooFewSets,
    #[error("sparsity {0} is outside [0, 1]")]
    InvalidSparsity(f64),
    #[error("invalid N:M pattern {n}:{m}")]
    InvalidNm { n: usize, m: usize },
    #[error("axis {axis} is out of range for tensor '{tensor}'")]
    InvalidAxis { tensor: String, axis: usize },
    #[error("invalid fraction {0}")]
    InvalidFraction(f64),
    #[error("round count must be positive")]
    InvalidRounds,
    #[error("at least two points are required")]
    TooFewPoints,
    #[error("curve points are not strictly increasing in sparsity at index {0}")]
    UnsortedPoints(usize),
    #[error("curve point {0} is outside [0, 1] or not finite")]
    InvalidPoint(usize),
    #[error("dense metric is not finite")]
    NonFiniteDense,
    #[error("tolerance must be finite and non-negative")]
    InvalidTolerance,
    #[error("iterations are not strictly increasing at entry {0}")]
    UnsortedIterations(usize),
    #[error("bin count must be positive")]
    InvalidBins,
    #[error("tensor '{tensor}' has zero variance and cannot be standardized")]
    ZeroVariance { tensor: String },
    #[error("tensor '{tensor}' matches no component rule")]
    UncoveredTensor { tensor: String },
}
