use he_core::HeError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    He(#[from] HeError),
    #[error("depth exhausted at layer {layer} during {op}")]
    DepthExhausted { layer: usize, op: &'static str },
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid head: {0}")]
    InvalidHead(String),
    #[error("layer {layer} input pads to {padded} slots but only {capacity} are available")]
    Capacity { layer: usize, padded: usize, capacity: usize },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("malformed head file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Attaches the layer index to depth errors raised by the backend.
pub(crate) fn at_layer(layer: usize) -> impl Fn(HeError) -> EngineError {
    move |e| match e {
        HeError::DepthExhausted { op } => EngineError::DepthExhausted { layer, op },
        other => EngineError::He(other),
    }
}
