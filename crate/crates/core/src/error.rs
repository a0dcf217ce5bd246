use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("band index {index} out of range for {bands} bands")]
    BandIndex { index: usize, bands: usize },

    #[error("reference direction must have unit norm (got {0})")]
    NonUnitDirection(f64),

    #[error("every candidate frequency is degenerate")]
    AllDegenerate,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::BandIndex { .. } | Error::NonUnitDirection(_) | Error::Parse { .. }
        )
    }
}
