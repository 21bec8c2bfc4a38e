use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate logits: every entry is -inf")]
    DegenerateLogits,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("absolute-continuity violated at index {index}: p = {p}, q = 0")]
    AbsoluteContinuity { index: usize, p: f64 },

    #[error("invalid probability vector: {0}")]
    InvalidProbVec(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid mixture spec: {0}")]
    InvalidSpec(String),

    #[error("nothing to forget")]
    NothingToForget,

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("sketch dimension k = {k} exceeds input dimension d = {d}")]
    SketchTooWide { k: usize, d: usize },

    #[error("insufficient data for proxy: {0}")]
    InsufficientData(String),

    #[error("covariance is not positive definite after ridge ({0})")]
    SingularCovariance(String),

    #[error("undefined renormalization: base probit at label {label} equals 1")]
    UndefinedRenormalization { label: usize },

    #[error("{0} proxies act on probits; no logit shift is defined without base logits")]
    ProbitLevelOnly(&'static str),

    #[error("admissibility check failed on sample {sample_id}: {reason}")]
    Admissibility { sample_id: u64, reason: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("missing KL_f entries in trace; a reference model is required")]
    MissingReference,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Numerical failures (as opposed to bad user input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateLogits
                | Error::NonFinite(_)
                | Error::AbsoluteContinuity { .. }
                | Error::SingularCovariance(_)
                | Error::UndefinedRenormalization { .. }
                | Error::Admissibility { .. }
                | Error::Diverged { .. }
        )
    }

    /// Module that raised the error, for CLI diagnostics.
    pub fn origin(&self) -> &'static str {
        match self {
            Error::DegenerateLogits
            | Error::NonFinite(_)
            | Error::AbsoluteContinuity { .. }
            | Error::InvalidProbVec(_)
            | Error::Empty(_)
            | Error::DimensionMismatch { .. } => "numkit",
            Error::InvalidDataset(_)
            | Error::InvalidSpec(_)
            | Error::NothingToForget
            | Error::InvalidScenario(_)
            | Error::SketchTooWide { .. } => "datagen",
            Error::InsufficientData(_)
            | Error::SingularCovariance(_)
            | Error::UndefinedRenormalization { .. }
            | Error::ProbitLevelOnly(_) => "proxies",
            Error::Admissibility { .. } => "unlearn",
            Error::Diverged { .. } | Error::MissingReference => "nets",
            Error::InvalidArgument(_) | Error::Config(_) => "cli",
            Error::Parse { .. } | Error::Io { .. } | Error::Json(_) => "io",
        }
    }
}
