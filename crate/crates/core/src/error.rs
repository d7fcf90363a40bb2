use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}line {line}{}: {message}", path_prefix(.path), column_suffix(.column))]
    Parse { path: Option<PathBuf>, line: u64, column: Option<String>, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("series too short: need at least {needed} time points, got {got}")]
    Length { needed: usize, got: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("length {0} is not a power of two of at least 2")]
    Size(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is numerically singular (condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    Value(String),

    #[error("class {0} is absent from the training data")]
    MissingClass(usize),

    #[error("class {class} is not stable (companion spectral radius {radius:.4})")]
    Stability { class: usize, radius: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!("{}: ", p.display()),
        None => String::new(),
    }
}

fn column_suffix(column: &Option<String>) -> String {
    match column {
        Some(c) => format!(", column {c}"),
        None => String::new(),
    }
}

impl Error {
    /// Process exit code for the command-line front end: 3 for data and
    /// validation problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Conditioning { .. } | Error::Stability { .. } | Error::Value(_) => 4,
            _ => 3,
        }
    }
}
