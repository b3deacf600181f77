use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing input: {} ({hint})", .path.display())]
    Missing { path: PathBuf, hint: String },
    #[error("{} already exists; pass --overwrite to replace it", .0.display())]
    Exists(PathBuf),
    #[error("{message}")]
    Runtime { message: String, seed: Option<u64> },
    #[error("i/o error on {}: {source}", .path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Missing { .. } | CliError::Exists(_) => 1,
            CliError::Runtime { .. } | CliError::Io { .. } => 2,
        }
    }

    /// Seed that reproduces a runtime failure.
    pub fn seed(&self) -> Option<u64> {
        match self {
            CliError::Runtime { seed, .. } => *seed,
            _ => None,
        }
    }

    pub fn runtime(message: impl std::fmt::Display, seed: u64) -> Self {
        CliError::Runtime { message: message.to_string(), seed: Some(seed) }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Exists("a".into()).exit_code(), 1);
        assert_eq!(CliError::Missing { path: "a".into(), hint: String::new() }.exit_code(), 1);
        let e = CliError::runtime("solver failed", 42);
        assert_eq!((e.exit_code(), e.seed()), (2, Some(42)));
        assert_eq!(CliError::io("a", io::Error::other("x")).exit_code(), 2);
    }
}
