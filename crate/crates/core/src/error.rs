use thiserror::Error;

/// Errors raised by the inference engines and their file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("newick parse error at offset {offset}: {message}")]
    Newick { offset: usize, message: String },

    #[error("unsupported tree: {0}")]
    UnsupportedTree(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid sequence data: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("particle system degenerated at step {step}: every weight is zero")]
    Degenerate { step: usize },

    #[error("ABC tolerance stalled at generation {generation} (epsilon = {epsilon}) after {attempts} attempts")]
    ToleranceStall {
        generation: usize,
        epsilon: f64,
        attempts: usize,
    },

    #[error("chain file line {line}: {message}")]
    ChainParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
