use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the sensitivity pipeline.
///
/// Variants fall into two families: input problems (bad files, missing
/// fields, validation failures) and domain problems (a value outside the
/// region where a formula is defined). [`Error::is_input`] tells them apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {parameter} = {value} {reason}")]
    Domain {
        parameter: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("unsupported measure '{0}' (expected RR or HR)")]
    UnsupportedMeasure(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        line: u64,
        column: Option<u64>,
        message: String,
    },

    #[error("validation error in row {row} (study '{study_id}'), field '{field}': {message}")]
    Validation {
        row: usize,
        study_id: String,
        field: &'static str,
        message: String,
    },

    #[error("in study '{study_id}'")]
    Study {
        study_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(parameter: &'static str, value: f64, reason: &'static str) -> Self {
        Error::Domain {
            parameter,
            value,
            reason,
        }
    }

    /// True for malformed or invalid input, false for computation failures.
    pub fn is_input(&self) -> bool {
        match self {
            Error::Domain { .. } => false,
            Error::Study { source, .. } => source.is_input(),
            _ => true,
        }
    }
}
