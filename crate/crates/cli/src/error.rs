use std::fmt;

use nnqf::ErrorCategory;

/// Failure of one command, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or inconsistent run configuration.
    Config(String),
    /// Library failure, with the file or step it concerns.
    Core { context: String, source: nnqf::Error },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Core { source, .. } => match source.category() {
                ErrorCategory::Config => 2,
                ErrorCategory::Data => 3,
                ErrorCategory::Solver => 4,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Core { context, source } if context.is_empty() => write!(f, "{source}"),
            Self::Core { context, source } => write!(f, "{context}: {source}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Config(_) => None,
            Self::Core { source, .. } => Some(source),
        }
    }
}

impl From<nnqf::Error> for CliError {
    fn from(source: nnqf::Error) -> Self {
        Self::Core { context: String::new(), source }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        nnqf::Error::Io(e).into()
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<nnqf::Error>> Context<T> for Result<T, E> {
    fn context(self, what: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError::Core { context: what(), source: e.into() })
    }
}
