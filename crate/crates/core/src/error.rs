use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("empty tensor")]
    EmptyTensor,

    #[error("unsupported ndim {0} (expected 1..=4)")]
    UnsupportedNdim(usize),

    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unknown dtype {0}")]
    UnknownDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("ACS exceeds budget: {acs} ACS lines but only {budget} lines per TSL")]
    AcsExceedsBudget { acs: usize, budget: usize },

    #[error(
        "underdetermined calibration: {rows} equations for {unknowns} unknowns; \
         need at least {required_acs} ACS lines (have {acs})"
    )]
    Underdetermined {
        rows: usize,
        unknowns: usize,
        acs: usize,
        required_acs: usize,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("degenerate prediction: zero L1 norm of the predicted k-space")]
    DegeneratePrediction,

    #[error("training diverged at iteration {iteration}; last finite parameters at {checkpoint}")]
    Diverged { iteration: usize, checkpoint: String },

    #[error("SVD did not converge after {0} sweeps")]
    SvdNoConvergence(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("architecture mismatch at {layer}: {reason}")]
    Architecture { layer: String, reason: String },

    #[error("missing self-consistency kernel for mode {0}")]
    MissingKernel(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::EmptyTensor => "empty_tensor",
            Error::UnsupportedNdim(_) => "unsupported_ndim",
            Error::BadMagic(_) => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::UnknownDtype(_) => "unknown_dtype",
            Error::Truncated { .. } => "truncated",
            Error::Config { .. } => "config",
            Error::Shape(_) => "shape",
            Error::Invalid(_) => "invalid",
            Error::AcsExceedsBudget { .. } => "acs_exceeds_budget",
            Error::Underdetermined { .. } => "underdetermined",
            Error::NonFinite(_) => "non_finite",
            Error::DegeneratePrediction => "degenerate_prediction",
            Error::Diverged { .. } => "diverged",
            Error::SvdNoConvergence(_) => "svd_no_convergence",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::Architecture { .. } => "architecture",
            Error::MissingKernel(_) => "missing_kernel",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
