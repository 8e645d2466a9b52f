use std::path::PathBuf;

/// Errors surfaced by the engine.
///
/// The variants map onto the process exit codes used by the command-line
/// driver (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed or inconsistent user input (scene files, replay files, grid dumps).
    #[error("input error: {0}")]
    Input(String),

    /// Input error tied to a specific line of a text file.
    #[error("input error: {path}:{line}: {message}")]
    InputLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Bad configuration, including missing or mis-shaped weight blocks.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (shape mismatch, bad timestep, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable exit code: 1 input/io, 2 configuration, 3 contract violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) | Error::InputLine { .. } | Error::Io { .. } => 1,
            Error::Config(_) => 2,
            Error::Contract(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
