use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("survival function at theta = {theta} is {survival:e}; hazard rate is undefined")]
    DegenerateSurvival { theta: f64, survival: f64 },

    #[error("type density at the upper endpoint is {0}; the boundary weight is undefined")]
    DegenerateDensity(f64),

    #[error("slope {value} at type {type_index}, cell {cell} lies outside [0, 1]")]
    InvalidSlope {
        type_index: usize,
        cell: usize,
        value: f64,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("instance too large: {assignments} assignments exceeds the cap of {cap}")]
    InstanceTooLarge { assignments: f64, cap: u64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
