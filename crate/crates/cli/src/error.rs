use std::fmt;
use std::path::Path;

use serde::Serialize;

/// Process exit codes. Clap's own usage errors also exit with 2.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const LEAK: i32 = 3;
    pub const FIT: i32 = 4;
    pub const NUMERIC: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: "config".into(),
            message: message.into(),
            exit_code: exit::CONFIG,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError {
            kind: "io".into(),
            message: format!("{}: {e}", path.display()),
            exit_code: exit::IO,
        }
    }

    pub fn internal(e: impl fmt::Display) -> Self {
        CliError {
            kind: "internal".into(),
            message: e.to_string(),
            exit_code: exit::NUMERIC,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<twomode_core::Error> for CliError {
    fn from(e: twomode_core::Error) -> Self {
        use twomode_core::Error as E;
        let exit_code = match &e {
            E::InvalidDimension(_) | E::InvalidParameter(_) | E::TruncationMismatch(_) | E::Json(_) => exit::CONFIG,
            E::LeakGuard { .. } => exit::LEAK,
            E::NonConvergence { .. } | E::RankDeficient(_) | E::InsufficientData(_) | E::Degenerate(_) => exit::FIT,
            E::InvalidState(_) | E::Undefined(_) | E::SeriesTruncation(_) | E::Integrator(_) => exit::NUMERIC,
        };
        CliError {
            kind: e.kind().into(),
            message: e.to_string(),
            exit_code,
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::config(e.to_string())
    }
}
