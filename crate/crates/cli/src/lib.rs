//! Library surface of the `qre` command-line tool: configuration parsing,
//! report rendering, and the command implementations. `main` is a thin
//! wrapper so integration tests can drive everything in-process as well as
//! through the binary.

pub mod commands;
pub mod config;
pub mod report;

/// Exit codes: 0 ok, 2 configuration error, 3 I/O or model error,
/// 4 data-format error.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<report::CsvError> for CliError {
    fn from(e: report::CsvError) -> Self {
        CliError {
            code: 4,
            message: e.to_string(),
        }
    }
}

impl From<qre_core::Error> for CliError {
    fn from(e: qre_core::Error) -> Self {
        use qre_core::Error as E;
        let code = match &e {
            E::Io { .. } => 3,
            E::BadMagic { .. }
            | E::Truncated(_)
            | E::DimensionOverflow(_)
            | E::Parse(_)
            | E::UnsupportedVersion { .. } => 4,
            _ => 2,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}
