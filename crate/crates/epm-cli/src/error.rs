use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed flags or flag values (bad vector syntax, unknown builtin).
    #[error("{0}")]
    Usage(String),
    #[error("could not access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// The document is not well formed; the detail carries line and field
    /// context from the deserializer.
    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    /// The document is well formed but declares an unusable problem; the
    /// detail names the failing block.
    #[error("invalid problem in {path}: {detail}")]
    Validation { path: PathBuf, detail: String },
    #[error(transparent)]
    Core(#[from] epm_core::Error),
}

impl CliError {
    /// Process exit code: 1 for anything the user can fix in the invocation
    /// or input file, 3 for failures inside a solve.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(epm_core::Error::InvalidConfig(_)) => 1,
            CliError::Core(_) => 3,
            _ => 1,
        }
    }
}
