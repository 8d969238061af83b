use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no momentum coefficient configured for block `{0}`")]
    MissingBeta(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("bound undefined: layer {layer} has beta = 0 with sigma > 0")]
    BoundUndefined { layer: usize },

    #[error("`{0}` is a reference-only method; read its figure from the reference table")]
    ReferenceOnly(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
