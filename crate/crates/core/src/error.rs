use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("algebra dimension: {0}")]
    Algebra(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("cannot stratify: {0}")]
    Stratification(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration, as opposed
    /// to failures that happen while work is running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Config(_)
                | Error::Stratification(_)
                | Error::Algebra(_)
                | Error::Dimension(_)
                | Error::Geometry(_)
        )
    }
}

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(format!($($arg)*)))
    };
}
pub(crate) use bail;
