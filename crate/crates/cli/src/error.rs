use std::path::Path;

use d4_core::embedkit::EmbedError;
use d4_core::learners::LearnerError;
use d4_core::synthbench::SynthError;
use d4_core::{D4Error, LinalgError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("learner failed: {0}")]
    Learner(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Dimension(_) => 3,
            CliError::Learner(_) => 4,
        }
    }

    pub fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn parse(path: &Path, message: impl Into<String>) -> CliError {
        CliError::Parse {
            path: path.display().to_string(),
            message: message.into(),
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::DimensionMismatch { .. } => CliError::Dimension(e.to_string()),
            _ => CliError::Learner(e.to_string()),
        }
    }
}

impl From<LearnerError> for CliError {
    fn from(e: LearnerError) -> Self {
        match e {
            LearnerError::Linalg(inner) => inner.into(),
            LearnerError::LengthMismatch { .. } => CliError::Dimension(e.to_string()),
            LearnerError::UnknownLearner(_)
            | LearnerError::UnknownKernel(_)
            | LearnerError::InvalidParameter(_)
            | LearnerError::NonBinaryLabel { .. }
            | LearnerError::NonFiniteTarget { .. }
            | LearnerError::UnsupportedTask { .. } => CliError::Config(e.to_string()),
            _ => CliError::Learner(e.to_string()),
        }
    }
}

impl From<D4Error> for CliError {
    fn from(e: D4Error) -> Self {
        match e {
            D4Error::Linalg(inner) => inner.into(),
            D4Error::Learner(inner) => inner.into(),
            D4Error::InvalidConfig(_) | D4Error::KOutOfRange { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SynthError::D4(inner) => inner.into(),
            SynthError::Learner(inner) => inner.into(),
            SynthError::Linalg(inner) => inner.into(),
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::Io { path, source } => CliError::Io { path, source },
            EmbedError::D4(inner) => inner.into(),
            EmbedError::Learner(inner) => inner.into(),
            EmbedError::Linalg(inner) => inner.into(),
            EmbedError::Incompatible(_) => CliError::Dimension(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}
