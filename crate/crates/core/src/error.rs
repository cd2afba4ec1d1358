use alloc::string::String;

/// Errors raised by the estimation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("zero-variance column {0}")]
    ZeroVariance(usize),

    #[error("too few observations: n = {n}, need at least {min}")]
    TooFewObservations { n: usize, min: usize },

    #[error("invalid number of groups k = {k}; allowed range is 1..={max}")]
    InvalidK { k: usize, max: usize },

    #[error("column index {index} out of range for p = {p}")]
    ColumnIndex { index: usize, p: usize },

    #[error("rank-deficient design (smallest singular value estimate {0:e})")]
    RankDeficient(f64),

    #[error("singular linear system (condition estimate {0:e})")]
    Singular(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value {value} at index {index} exceeds the bound {bound}")]
    BoundViolated { index: usize, value: f64, bound: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unknown DGP `{0}` (valid: cns, cas1, cas2, ds1, mns, ms, dns, ds2, das2)")]
    UnknownDgp(String),
}

pub type Result<T> = core::result::Result<T, Error>;
