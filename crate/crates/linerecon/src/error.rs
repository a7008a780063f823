use std::path::PathBuf;

/// Broad class of a failure; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Malformed { path: PathBuf, message: String },

    #[error("{}: no data rows after the header", path.display())]
    EmptySpectrum { path: PathBuf },

    #[error("{}: x is not increasing at row {row}", path.display())]
    NonMonotone { path: PathBuf, row: usize },

    #[error("{}: grid is not uniform at row {row} (off by {deviation:e} steps)", path.display())]
    NonUniform {
        path: PathBuf,
        row: usize,
        deviation: f64,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Core(#[from] linerecon_core::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Usage(_) => ErrorClass::Usage,
            Error::Core(e) => core_class(e),
            _ => ErrorClass::Data,
        }
    }

    /// A short suggestion for the user, when one applies.
    pub fn hint(&self) -> Option<&'static str> {
        use linerecon_core::Error as C;
        Some(match self {
            Error::Usage(_) => "run with --help for the accepted flags",
            Error::Io { .. } => "check that the path exists and is writable",
            Error::Malformed { .. } | Error::EmptySpectrum { .. } => {
                "spectra are CSV files with an `x,value` header and one row per sample"
            }
            Error::NonMonotone { .. } | Error::NonUniform { .. } => {
                "samples must lie on a uniform increasing grid"
            }
            Error::Json { .. } => "check the JSON against the bundled configuration in data/",
            Error::Core(e) => match e {
                C::KernelEntry { source, .. } => return Error::Core((**source).clone()).hint(),
                C::InvalidGrid(_) => {
                    "the input grid must match `band` and `m` of the configuration"
                }
                C::NotBracketed { .. } => "widen `alpha_search`, or fix alpha with --alpha",
                C::RankDeficient { .. } | C::BackgroundCollinear { .. } => {
                    "lower --L or shift the solution interval so candidate lines stay apart"
                }
                C::Underdetermined { .. } => "lower --L or supply more samples",
                C::Factorization(_) => "increase alpha",
                C::InsufficientData { .. } => "supply more samples",
                C::EmptyComparison => "the reconstruction and the truth are both empty",
                C::Domain { .. } | C::InvalidArgument(_) | C::Dimension { .. } => return None,
            },
        })
    }
}

fn core_class(e: &linerecon_core::Error) -> ErrorClass {
    use linerecon_core::Error as C;
    match e {
        C::KernelEntry { source, .. } => core_class(source),
        C::NotBracketed { .. }
        | C::RankDeficient { .. }
        | C::BackgroundCollinear { .. }
        | C::Underdetermined { .. }
        | C::Factorization(_) => ErrorClass::Numerical,
        _ => ErrorClass::Data,
    }
}

pub type Result<T> = std::result::Result<T, Error>;
