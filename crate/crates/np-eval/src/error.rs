use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NpError {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate fit: sigma is zero")]
    Degenerate,

    #[error("parameter order violated: mu0 = {mu0} must not exceed mu1 = {mu1}")]
    ParameterOrder { mu0: f64, mu1: f64 },

    #[error("argument outside the domain of {0}")]
    Domain(&'static str),

    #[error("target {target} outside the curve range [{lo}, {hi}]")]
    OutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, NpError>;
