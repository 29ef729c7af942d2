use thiserror::Error;

/// Errors raised anywhere in the construction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// A stage could not reach its tolerance.
    #[error("{stage}: achieved {achieved:.3e}, allowed {allowed:.3e}")]
    Budget {
        stage: String,
        achieved: f64,
        allowed: f64,
    },

    /// A stored model whose redundant fields disagree with its exact data.
    #[error("inconsistent model: {0}")]
    Inconsistent(String),

    #[error("index has {bits} bits, above the materialization cap of {cap}")]
    IndexTooLarge { bits: String, cap: u32 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
