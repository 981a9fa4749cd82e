use std::path::{Path, PathBuf};

/// Failures surfaced by the command-line tools, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}: malformed data at byte {offset}: {message}")]
    Format { path: PathBuf, offset: u64, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 usage, 2 data or I/O, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Format { .. } | CliError::Data(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().to_path_buf(), source }
    }

    pub fn format(path: impl AsRef<Path>, offset: u64, message: impl Into<String>) -> Self {
        CliError::Format { path: path.as_ref().to_path_buf(), offset, message: message.into() }
    }

    /// Prefixes a data or numerical message with where it happened.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
            other => other,
        }
    }
}

impl From<lcsep_core::Error> for CliError {
    fn from(e: lcsep_core::Error) -> Self {
        match e {
            lcsep_core::Error::Numerical(m) => CliError::Numerical(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::format("a.wav", 12, "bad").exit_code(), 2);
        assert_eq!(CliError::from(lcsep_core::Error::InvalidInput("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(lcsep_core::Error::Numerical("nan".into())).exit_code(), 3);
    }
}
