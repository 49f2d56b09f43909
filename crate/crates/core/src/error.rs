use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or input violates a documented invariant. `key` names the
    /// offending field using the config's dotted path where one exists.
    #[error("invalid {key}: {message}")]
    Invalid { key: String, message: String },

    #[error("Newton solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid { key: key.into(), message: message.into() }
    }

    /// Prefixes the key path of an `Invalid` error, e.g. `p` -> `model.p`.
    pub fn within(self, section: &str) -> Self {
        match self {
            Error::Invalid { key, message } => Error::Invalid { key: format!("{section}.{key}"), message },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
