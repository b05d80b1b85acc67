use thiserror::Error;

/// Errors surfaced by the simulator, learners and harness.
#[derive(Debug, Error)]
pub enum PalcasError {
    /// A caller broke a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unknown vehicle id {0}")]
    UnknownVehicle(u64),

    /// Checkpoint or weight set does not match the expected layout.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    /// Network produced NaN or infinite values.
    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = PalcasError> = std::result::Result<T, E>;

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(PalcasError::Contract(msg.into()))
}
