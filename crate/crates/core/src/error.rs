use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite component at index {index} ({value})")]
    NonFinite { index: usize, value: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Issued power exceeded the energy stored in the battery.
    #[error("energy availability fault: requested {requested}, available {available}")]
    EnergyAvailability { requested: f64, available: f64 },

    #[error("projected gradient ascent did not converge after {iterations} iterations (gradient mapping norm {gradient_mapping_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_mapping_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invariant violated in run {run_id} at slot {slot}: {what}")]
    InvariantViolation {
        run_id: u64,
        slot: u64,
        what: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
