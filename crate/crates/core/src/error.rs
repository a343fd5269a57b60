use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("series does not converge: {0}")]
    NonConvergent(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("kernel value out of range: {0}")]
    Range(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("order {order} exceeds the supported maximum {max}")]
    Overflow { order: usize, max: usize },

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("step cap of {cap} exceeded: {context}")]
    StepCap { cap: u64, context: String },
}
