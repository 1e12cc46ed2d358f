use thiserror::Error;

/// Errors raised by the measure, spectrum and construction routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("weight {0} is not strictly inside (0, 1)")]
    InvalidProbability(f64),

    #[error("level {level} cannot be resolved (sequence defines {available} levels)")]
    Index { level: u64, available: u64 },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid block schedule: {0}")]
    Schedule(String),

    #[error("bins [{bins_low}, {bins_high}] do not cover attainable alpha range [{alpha_min}, {alpha_max}]")]
    Coverage {
        alpha_min: f64,
        alpha_max: f64,
        bins_low: f64,
        bins_high: f64,
    },

    #[error("degenerate linear system (condition estimate {condition:e})")]
    Degenerate { condition: f64 },

    #[error("violated precondition: {0}")]
    Precondition(String),

    #[error("construction failed at q = {q}: {reason}")]
    ConstructionFailed { q: f64, reason: String },

    #[error("maximal combination switches inside target interval [{low}, {high}]")]
    MaxSwitch { low: f64, high: f64 },
}

impl Error {
    /// Construction failures get a distinct exit code in the CLI.
    pub fn is_construction_failure(&self) -> bool {
        matches!(
            self,
            Error::ConstructionFailed { .. }
                | Error::MaxSwitch { .. }
                | Error::Degenerate { .. }
                | Error::Precondition(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidProbability(_) => "invalid_probability",
            Error::Index { .. } => "index",
            Error::Argument(_) => "argument",
            Error::Schedule(_) => "schedule",
            Error::Coverage { .. } => "coverage",
            Error::Degenerate { .. } => "degenerate",
            Error::Precondition(_) => "precondition",
            Error::ConstructionFailed { .. } => "construction_failed",
            Error::MaxSwitch { .. } => "max_switch",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
