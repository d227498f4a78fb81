use std::path::PathBuf;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("{what} needs at least {needed} samples, got {found}")]
    TooShort {
        what: &'static str,
        needed: usize,
        found: usize,
    },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("channel branch `{0}` was not fitted")]
    UnfitBranch(&'static str),

    #[error("unknown layer boundary {0}")]
    UnknownBoundary(usize),

    #[error("format error in {what} at byte offset {offset}: {msg}")]
    Format {
        what: String,
        offset: u64,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input files: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    MissingInput(Vec<PathBuf>),

    #[error("report validation failed for {file}: {msg}")]
    Validation { file: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(op: &'static str, left: impl std::fmt::Debug, right: impl std::fmt::Debug) -> Self {
        Error::Shape {
            op,
            left: format!("{left:?}"),
            right: format!("{right:?}"),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 missing input, 4 numeric failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidSpec(_) => 2,
            Error::MissingInput(_) | Error::Validation { .. } => 3,
            Error::NonFinite(_) | Error::Diverged { .. } | Error::Degenerate(_) | Error::UnfitBranch(_) => 4,
            _ => 1,
        }
    }
}
