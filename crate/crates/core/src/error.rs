use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Caller violated a documented precondition (bad mode, shape mismatch, bad flag).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input file does not follow its declared layout.
    #[error("format error: {0}")]
    Format(String),
    /// Input is well formed but unusable (non-finite values, missing identities, empty pair sets).
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    /// No discriminative directions survived selection.
    #[error("degenerate problem: {0}")]
    Degenerate(String),
    /// Failure inside one alternating mode solve.
    #[error("mode-{mode} solve failed at iteration {iteration}: {source}")]
    ModeSolve {
        mode: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Prefix the message of a string-carrying error with `ctx`.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::Usage(m) => Error::Usage(format!("{ctx}: {m}")),
            Error::Format(m) => Error::Format(format!("{ctx}: {m}")),
            Error::Data(m) => Error::Data(format!("{ctx}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{ctx}: {m}")),
            Error::Degenerate(m) => Error::Degenerate(format!("{ctx}: {m}")),
            other => other,
        }
    }

    /// Process exit status for this error: 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::ModeSolve { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
