use thiserror::Error;

/// Errors raised by model validation, sampling and the replication engine.
///
/// Station indices are zero-based in the variant fields and printed one-based.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("station {} is unstable: load E[J]/(mu E[I]) = {load:.6} >= 1", station + 1)]
    UnstableStation { station: usize, load: f64 },

    #[error("station {}: service requirement has no exponential moments", station + 1)]
    HeavyTail { station: usize },

    #[error("station {}: no positive Cramer root inside the moment generating function domain", station + 1)]
    RootNotBracketed { station: usize },

    #[error("tilt parameter {tilt} lies outside the moment generating function domain")]
    TiltOutsideDomain { tilt: f64 },

    #[error("step budget exhausted after {steps} increments")]
    BudgetExceeded { steps: u64 },

    #[error("at least 2 samples are required, got {n}")]
    InsufficientSamples { n: usize },

    #[error("replication {index}: {source}")]
    Replication {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips replication context.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::Replication { source, .. } => source.root_cause(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
