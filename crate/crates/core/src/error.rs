use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates the documented domain of an operation or type.
    #[error("{name} = {value} is outside its valid domain: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("the dispersion model requires a positive diffusion coefficient")]
    NoDiffusion,

    #[error("the flow-dominated model requires a positive mean velocity")]
    NoFlow,

    #[error("the operation requires a point release")]
    NotPointRelease,

    #[error("sequence length {0} is too large to enumerate (limit 20); use a Monte Carlo method")]
    SequenceTooLong(usize),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("resource limit exceeded: {0}")]
    ResourceExhausted(String),
}

pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        reason,
    }
}
