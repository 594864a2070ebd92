use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid channel: {0}")]
    Channel(String),
    #[error("representation error: {0}")]
    Representation(String),
    #[error("perturbation scale condition violated at layer {layer}: {detail}")]
    ScaleCondition { layer: usize, detail: String },
    #[error("sampler exhausted after {0} attempts")]
    SamplerExhausted(usize),
    #[error("parameter layout mismatch: expected {expected}, got {got}")]
    Layout { expected: usize, got: usize },
    #[error("model error: {0}")]
    Model(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("labeler error: {0}")]
    Labeler(String),
    #[error("statistics undefined: {0}")]
    Undefined(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
