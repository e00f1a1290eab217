use thiserror::Error;

/// Errors raised across the preprocessing, memory and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix has no nonzero entry")]
    ZeroMatrix,
    #[error("entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("invalid matrix shape: {0}")]
    Shape(String),
    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
    #[error("value {value} does not fit a fixed-point word with {int_bits} integer bits")]
    Overflow { value: f64, int_bits: u32 },
    #[error("invalid fixed-point format: {0}")]
    Format(String),
    #[error("switch tree is not idle: switch {0} is not in the wait state")]
    DirtyTree(usize),
    #[error("access paths do not match the active routing on this tree")]
    PathMismatch,
    #[error("address support is empty")]
    EmptySupport,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("address register changed since the paired retrieval")]
    StaleAddress,
    #[error("decoded a negative or non-finite register value {0}")]
    NegativeDecode(f64),
    #[error("rotation angle is zero")]
    ZeroAngle,
    #[error("working registers are not disentangled: {0}")]
    DisentanglementFailure(String),
    #[error("dimension mismatch: result is {result_rows}x{result_cols}, matrix is {rows}x{cols}")]
    DimMismatch {
        result_rows: usize,
        result_cols: usize,
        rows: usize,
        cols: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
