use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A precondition on sizes or values was violated.
    InvalidInput(String),
    /// Two sequences that must have equal length did not.
    LengthMismatch { expected: usize, found: usize },
    /// Pearson correlation with a zero-variance series.
    UndefinedCorrelation,
    /// Min-max normalization of a column whose max equals its min.
    DegenerateColumn,
    /// Chebyshev argument outside `[-1, 1]`.
    OutOfDomain(f64),
    /// Fewer samples than polynomial coefficients.
    Underdetermined { rows: usize, cols: usize },
    NonIncreasingTimestamps { index: usize },
    /// Lagging or splitting leaves too little training data.
    InsufficientHistory { rows: usize, needed: usize },
    /// A GRU forward or tangent pass produced a non-finite value.
    NumericalOverflow { step: usize },
    /// An objective returned a non-finite loss or gradient.
    NonFiniteLoss { step: usize },
    /// MAPE with an actual value at (or within 1e-9 of) zero.
    MapeUndefined { index: usize },
    /// Trace and parameter dimensions disagree.
    TraceMismatch,
    /// No candidate in a generation produced a finite validation loss.
    AllCandidatesFailed { generation: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::LengthMismatch { expected, found } => {
                write!(f, "length mismatch: expected {expected}, found {found}")
            }
            Error::UndefinedCorrelation => write!(f, "undefined correlation (zero-variance series)"),
            Error::DegenerateColumn => write!(f, "degenerate column (max equals min)"),
            Error::OutOfDomain(v) => write!(f, "argument {v} outside [-1, 1]"),
            Error::Underdetermined { rows, cols } => {
                write!(f, "underdetermined: {rows} samples for {cols} coefficients")
            }
            Error::NonIncreasingTimestamps { index } => {
                write!(f, "timestamps not increasing at row {index}")
            }
            Error::InsufficientHistory { rows, needed } => {
                write!(f, "insufficient history: {rows} rows, need at least {needed}")
            }
            Error::NumericalOverflow { step } => write!(f, "numerical overflow at step {step}"),
            Error::NonFiniteLoss { step } => write!(f, "non-finite loss at step {step}"),
            Error::MapeUndefined { index } => {
                write!(f, "MAPE undefined at zero actual (index {index})")
            }
            Error::TraceMismatch => write!(f, "trace does not match parameter dimensions"),
            Error::AllCandidatesFailed { generation } => {
                write!(f, "all candidates failed in generation {generation}")
            }
        }
    }
}

impl core::error::Error for Error {}
