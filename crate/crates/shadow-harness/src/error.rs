use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShadowError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} has {available} items, {requested} requested")]
    Capacity { class: usize, requested: usize, available: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("operation needs a head with a hidden layer")]
    NoHiddenLayer,

    #[error("operation needs a linear head, got {layers} layers")]
    NotLinear { layers: usize },

    #[error("class {class} not present (head has {classes} classes)")]
    MissingClass { class: usize, classes: usize },

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("record with seed {seed}: {source}")]
    RecordIo { seed: u64, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Engine(#[from] rhe_engine::EngineError),

    #[error(transparent)]
    Np(#[from] np_eval::NpError),
}

pub type Result<T> = std::result::Result<T, ShadowError>;
