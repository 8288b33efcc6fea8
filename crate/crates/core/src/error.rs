use std::path::PathBuf;

/// Errors raised anywhere in the workbench.
///
/// The CLI maps [`Error::Config`] to exit code 2 and every other variant to
/// exit code 3.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: line {line}: {message}")]
    Format {
        context: String,
        line: usize,
        message: String,
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: String,
        expected: u32,
    },

    #[error("capture error: {0}")]
    Capture(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("only {reachable} labels reachable from the homepage, {requested} requested")]
    Unreachable { requested: usize, reachable: usize },

    #[error("no valid path through the sequence model")]
    NoValidPath,

    #[error("label {0} is not part of the site")]
    UnknownLabel(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, line: usize, message: impl ToString) -> Self {
        Error::Format {
            context: context.into(),
            line,
            message: message.to_string(),
        }
    }

    /// True for errors caused by a bad configuration rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
