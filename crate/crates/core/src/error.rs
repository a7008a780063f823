use alloc::string::String;

/// Errors raised by the reconstruction routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} is outside its domain: {detail}")]
    Domain { what: &'static str, detail: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("kernel evaluation failed at entry ({row}, {col}): {source}")]
    KernelEntry {
        row: usize,
        col: usize,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("{what} needs at least {needed} samples, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("discrepancy root not bracketed: residual({alpha_lo:e}) = {residual_lo:e}, residual({alpha_hi:e}) = {residual_hi:e}, target delta = {delta:e}")]
    NotBracketed {
        alpha_lo: f64,
        alpha_hi: f64,
        residual_lo: f64,
        residual_hi: f64,
        delta: f64,
    },

    #[error("refined system is rank deficient: columns at {first} and {second} are collinear")]
    RankDeficient { first: f64, second: f64 },

    #[error("refined system is rank deficient: the line column at {frequency} is collinear with the background")]
    BackgroundCollinear { frequency: f64 },

    #[error("refined system is underdetermined: {rows} equations for {unknowns} unknowns")]
    Underdetermined { rows: usize, unknowns: usize },

    #[error("cannot compare empty line lists")]
    EmptyComparison,

    #[error("factorization failed: {0}")]
    Factorization(&'static str),
}

impl Error {
    pub(crate) fn domain(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            what,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
