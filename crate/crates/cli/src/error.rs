use std::path::Path;

use splitig_core::Error as CoreError;

/// Exit status `2`.
pub const EXIT_INPUT: i32 = 2;
/// Exit status `3`.
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => EXIT_INPUT,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }

    /// Wraps a core error that occurred while reading `path`.
    pub fn at_path(path: &Path, err: CoreError) -> Self {
        match CliError::from(err) {
            CliError::Input(m) => CliError::Input(format!("`{}`: {m}", path.display())),
            other => other,
        }
    }
}

/// Errors that only concern the numbers of one sample; the sample can be
/// skipped without invalidating the run.
pub fn is_numeric(err: &CoreError) -> bool {
    matches!(
        err,
        CoreError::NumericOverflow { .. }
            | CoreError::NonFinite { .. }
            | CoreError::TrainingDiverged { .. }
            | CoreError::UndefinedRatio
            | CoreError::UndefinedSimilarity
            | CoreError::UndefinedSensitivity
    )
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        if is_numeric(&err) {
            CliError::Numeric(err.to_string())
        } else {
            CliError::Input(err.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Input(err.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
