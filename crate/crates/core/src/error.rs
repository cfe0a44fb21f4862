use thiserror::Error;

/// Errors produced by the photon-statistics model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A `SourceConfig` field violates its invariant.
    #[error("invalid source configuration: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    /// The distribution leaves too much probability beyond the truncation bound.
    #[error("probability mass beyond n = {n_max} is {tail_mass:e}; increase n_max")]
    Truncation { n_max: usize, tail_mass: f64 },

    /// A figure of merit that has no value for the given distribution.
    #[error("{0} is undefined for the vacuum state")]
    Undefined(&'static str),

    #[error("invalid Monte Carlo configuration: {0}")]
    MonteCarlo(String),

    /// Two inputs that must describe the same source do not.
    #[error("configuration mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
