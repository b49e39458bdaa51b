use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] t1rho_inr::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("input {path} does not match the manifest: expected sha256 {expected}, found {found}")]
    InputMismatch {
        path: String,
        expected: String,
        found: String,
    },

    #[error("rerun is not reproducible: {0}")]
    NotReproducible(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::InputMismatch { .. } => "input_mismatch",
            CliError::NotReproducible(_) => "not_reproducible",
            CliError::Manifest(_) => "manifest",
        }
    }

    /// The error as a single JSON object, as printed on stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut body = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Core(t1rho_inr::Error::Config { field, .. }) = self {
            body["field"] = json!(field);
        }
        if let CliError::Core(t1rho_inr::Error::Underdetermined { required_acs, .. }) = self {
            body["required_acs"] = json!(required_acs);
        }
        json!({ "error": body })
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
