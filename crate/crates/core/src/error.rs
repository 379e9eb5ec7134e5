use thiserror::Error;

/// Errors raised by the numerics, the simulators and the experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("argument out of range: {0}")]
    Range(String),

    #[error("lifespan measure is not supercritical (b*E[V] = {mean_offspring})")]
    NotSupercritical { mean_offspring: f64 },

    #[error("root finding failed: {0}")]
    RootFinding(String),

    #[error("regime mismatch: {0}")]
    Regime(String),

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("population exceeded the cap of {cap} individuals")]
    PopulationCap { cap: usize },

    #[error("gave up after {attempts} extinct runs")]
    RetryLimit { attempts: u64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("tail truncation error {error:e} exceeds tolerance {tolerance:e}")]
    Truncation { error: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("statistic key mismatch: {0}")]
    KeyMismatch(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
