use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bad magic in {what}: expected {expected:?}")]
    BadMagic { what: &'static str, expected: &'static str },

    #[error("truncated payload in {0}")]
    Truncated(&'static str),

    #[error("dimension overflow in {0}")]
    DimensionOverflow(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("chi-squared kernel requires nonnegative features")]
    NegativeFeature,

    #[error("{0} not converged")]
    NotConverged(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed{}: {source}", fold_suffix(*.fold))]
    Stage {
        stage: &'static str,
        fold: Option<usize>,
        #[source]
        source: Box<Error>,
    },
}

fn fold_suffix(fold: Option<usize>) -> String {
    fold.map(|k| format!(" on fold {k}")).unwrap_or_default()
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str, fold: Option<usize>) -> Self {
        Error::Stage { stage, fold, source: Box::new(self) }
    }

    /// Process exit code for the CLI: 1 usage, 2 data/format, 3 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::NotConverged(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
