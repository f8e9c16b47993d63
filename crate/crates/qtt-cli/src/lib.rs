//! Batch experiment driver for tensor-train grid compression: config
//! parsing, run orchestration, deterministic CSV/JSON reporting, and a
//! procedural test-image generator.

pub mod config;
pub mod report;
pub mod runner;
pub mod testimg;

use std::fmt;

/// Process exit codes: 0 ok, 2 config error, 3 I/O error, 4 numeric failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Config = 2,
    Io = 3,
    Numeric = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError {
            code: ExitCode::Config,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> CliError {
        CliError {
            code: ExitCode::Io,
            message: msg.into(),
        }
    }

    pub fn numeric(msg: impl Into<String>) -> CliError {
        CliError {
            code: ExitCode::Numeric,
            message: msg.into(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.code {
            ExitCode::Ok => "ok",
            ExitCode::Config => "config",
            ExitCode::Io => "io",
            ExitCode::Numeric => "numeric",
        }
    }

    /// One-line machine-readable error report for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": {
                "code": self.code as i32,
                "kind": self.kind(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl From<qtt_core::Error> for CliError {
    fn from(e: qtt_core::Error) -> CliError {
        use qtt_core::Error as E;
        match &e {
            E::InvalidArgument(_) | E::ShapeMismatch(_) => CliError::config(e.to_string()),
            E::Io(_) | E::Format(_) => CliError::io(e.to_string()),
            E::Numeric(_) | E::ResourceLimit(_) => CliError::numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
