use thiserror::Error;

pub type Result<T> = std::result::Result<T, SdtwError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdtwError {
    #[error("shape {batch}x{length}x{features} needs {expected} values, got {actual}")]
    DimensionMismatch {
        batch: usize,
        length: usize,
        features: usize,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("{what} must be at least 1")]
    ZeroDimension { what: &'static str },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("gamma must be finite and strictly positive, got {0}")]
    InvalidGamma(f64),

    #[error("bandwidth {bandwidth} cannot connect the corners of a {n}x{m} grid (needs 0 or >= {})", n.abs_diff(*m))]
    BandTooNarrow { bandwidth: usize, n: usize, m: usize },

    #[error("normalized soft-DTW requires equal lengths, got {n} and {m}")]
    UnequalLengths { n: usize, m: usize },

    #[error("out of memory: could not allocate {requested_bytes} bytes")]
    OutOfMemory { requested_bytes: usize },

    #[error("index ({b}, {i}, {j}) out of range for a {batch}x{n}x{m} cost grid")]
    IndexOutOfRange {
        b: usize,
        i: usize,
        j: usize,
        batch: usize,
        n: usize,
        m: usize,
    },

    #[error("end cell is unreachable for batch element {b}")]
    UnreachableEnd { b: usize },

    #[error("forward table is not completed at batch {b}, cell ({i}, {j})")]
    TableIncomplete { b: usize, i: usize, j: usize },

    #[error("gradient table must be in linear space")]
    LogSpaceTable,

    #[error("ledger underflow: releasing {requested} bytes with only {live} live")]
    LedgerUnderflow { live: usize, requested: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
