// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spin count {n} outside the supported range 1..={max}")]
    Capacity { n: usize, max: usize },

    #[error("spin count mismatch: expected {expected}, found {found}")]
    SpinMismatch { expected: usize, found: usize },

    #[error("invalid basis label: {0}")]
    InvalidLabel(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NonHermitian { deviation: f64 },

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("step-stability violated: dt * radius = {product:.4} exceeds {limit}")]
    Stability { product: f64, limit: f64 },

    #[error("numerical instability: state became non-finite at step {step}")]
    NonFinite { step: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
