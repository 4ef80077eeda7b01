use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DECODE: i32 = 3;
    pub const INFEASIBLE: i32 = 4;
    pub const UNCONVERGED: i32 = 5;
    pub const KKT_FAILED: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Core(#[from] geomeasure::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(e: serde_json::Error) -> Self {
        Self::Decode(format!("{e}"))
    }

    /// A core validation error found while decoding `field`.
    pub(crate) fn field(field: &str, e: geomeasure::Error) -> Self {
        Self::Decode(format!("field `{field}`: {e}"))
    }

    pub fn exit_code(&self) -> i32 {
        use geomeasure::Error as E;
        match self {
            CliError::Io { .. } => exit::IO,
            CliError::Usage(_) => exit::USAGE,
            CliError::Decode(_) => exit::DECODE,
            CliError::Infeasible(_) => exit::INFEASIBLE,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::InvalidParameter(_) | E::TooFewTerms { .. } => exit::USAGE,
                E::EmptyActiveSet(_) | E::ImaginaryComponent { .. } => exit::KKT_FAILED,
                E::ShapeMismatch { .. } | E::LengthMismatch { .. } => exit::USAGE,
                _ => exit::DECODE,
            },
        }
    }
}
