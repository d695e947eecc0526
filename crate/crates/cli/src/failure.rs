use std::fmt;
use std::io::ErrorKind;
use std::path::Path;

use serde::Serialize;
use singulate::Error;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;

#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl Failure {
    fn new(kind: &'static str, exit_code: i32, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            exit_code,
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", EXIT_USAGE, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", EXIT_USAGE, message)
    }

    pub fn missing(path: &Path) -> Self {
        Self::new("missing_file", EXIT_MISSING, format!("{} does not exist", path.display()))
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self::new("schema_mismatch", EXIT_SCHEMA, message)
    }

    pub fn other(message: impl Into<String>) -> Self {
        Self::new("error", EXIT_OTHER, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == ErrorKind::NotFound {
            Self::missing(path)
        } else {
            Self::other(format!("{}: {e}", path.display()))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{{\"kind\":\"error\",\"message\":{:?}}}", self.message))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match &e {
            Error::Io { source, .. } if source.kind() == ErrorKind::NotFound => {
                Self::new("missing_file", EXIT_MISSING, e.to_string())
            }
            Error::Schema { .. } | Error::Version { .. } | Error::Magic(_) => Self::schema(e.to_string()),
            _ => Self::other(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::other(e.to_string())
    }
}

/// Fails with the missing-file code unless `path` exists.
pub fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::missing(path))
    }
}
