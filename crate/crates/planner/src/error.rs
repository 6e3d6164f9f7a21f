use he_core::HeError;
use rhe_engine::EngineError;
use thiserror::Error;

/// Constraint that rules out every ring dimension in the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binding {
    SecurityBound,
    SlotCapacity,
    ModulusHeadroom,
}

impl std::fmt::Display for Binding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Binding::SecurityBound => "Q_max exceeds the security bound of every ring dimension",
            Binding::SlotCapacity => "no ring dimension has enough slots for the widest layer input",
            Binding::ModulusHeadroom => "Q_S cannot reach Q_M + 10 within the 60-bit modulus limit",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(Binding),

    #[error("upper bound not applicable: {0}")]
    BoundNotApplicable(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed cost profile: {0}")]
    Format(String),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    He(#[from] HeError),
}

pub type Result<T> = std::result::Result<T, PlannerError>;
