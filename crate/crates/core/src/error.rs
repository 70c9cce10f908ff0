//! Error types shared across the library.

/// Errors produced by configuration validation and model evaluation.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A parameter violates its physical range or a required field is missing.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The requested quantity is mathematically undefined for these inputs.
    #[error("domain error: {0}")]
    Domain(String),

    /// The computation would exceed a hard resource bound.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A Monte Carlo estimate cannot be formed from the available counts.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// An optimum sits on the search boundary, so dependent quantities are undefined.
    #[error("degenerate optimum: {0}")]
    DegenerateOptimum(String),
}

pub type Result<T> = std::result::Result<T, Error>;
