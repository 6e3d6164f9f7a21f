use thiserror::Error;

/// Failures raised by parameter validation, key handling and slot arithmetic.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("capacity exceeded: {len} values do not fit in {capacity} slots")]
    Capacity { len: usize, capacity: usize },

    #[error("decryption requires the secret key")]
    Unauthorized,

    #[error("operands were created under different parameters")]
    ParamsMismatch,

    #[error("multiplicative depth exhausted at {op} (level 0)")]
    DepthExhausted { op: &'static str },

    #[error("scale mismatch: {left} vs {right}")]
    ScaleMismatch { left: f64, right: f64 },

    #[error("no rotation key available for step {step}")]
    MissingRotationKey { step: i64 },

    #[error("malformed serialized data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, HeError>;
