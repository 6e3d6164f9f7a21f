use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation; exit code 2.
    #[error("{0}")]
    Usage(String),

    /// Failure while doing the work; exit code 1.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        }
    )*};
}

domain_from!(
    std::io::Error,
    serde_json::Error,
    he_core::HeError,
    rhe_engine::EngineError,
    planner::PlannerError,
    np_eval::NpError,
    shadow_harness::ShadowError
);

pub type Result<T> = std::result::Result<T, CliError>;
