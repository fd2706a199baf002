use std::path::PathBuf;

use thiserror::Error;

use crate::period::Period;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, column {column}: malformed period {value:?} (expected YYYY-MM)")]
    MalformedPeriod { row: usize, column: usize, value: String },

    #[error("row {row}: periods not increasing ({previous} followed by {found})")]
    NonMonotoneDates {
        row: usize,
        previous: Period,
        found: Period,
    },

    #[error("row {row}: gap in months between {previous} and {found}")]
    GapInMonths {
        row: usize,
        previous: Period,
        found: Period,
    },

    #[error("row {row}, column {column} ({variable}): interior missing value")]
    InteriorMissing {
        row: usize,
        column: usize,
        variable: String,
    },

    #[error("row {row}, column {column} ({variable}): not a number: {value:?}")]
    NonNumeric {
        row: usize,
        column: usize,
        variable: String,
        value: String,
    },

    #[error("column {column}: duplicate variable id {variable:?}")]
    DuplicateVariable { column: usize, variable: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("unknown variable id {0:?}")]
    UnknownVariable(String),

    #[error("metadata mismatch: {0}")]
    Metadata(String),

    #[error("insufficient window: {0}")]
    InsufficientWindow(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gibbs iteration {iteration}: non-finite draw in {block}")]
    Sampler { iteration: usize, block: &'static str },

    #[error("missing realized value for {0}")]
    MissingRealized(String),

    #[error("missing records: {0}")]
    MissingRecords(String),
}

impl Error {
    /// Errors caused by the user's inputs (configs, data files, plans) as
    /// opposed to failures while computing.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::NonFinite(_) | Error::Sampler { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
