use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("server id {id} out of range 1..={max}")]
    ServerOutOfRange { id: u32, max: usize },
    #[error("rack id {id} out of range 1..={max}")]
    RackOutOfRange { id: u32, max: usize },
    #[error("{count} task types exceed the enumeration cap {cap}; use the pooled form")]
    TooManyTypes { count: f64, cap: usize },
    #[error("direction is identically zero; boundary is unbounded")]
    ZeroDirection,
    #[error("unsupported regime: {0}")]
    Unsupported(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("refinement did not converge: {0}")]
    NoConvergence(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
