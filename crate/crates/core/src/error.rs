use thiserror::Error;

/// Errors produced by the simulation and statistics routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A density matrix violates Hermiticity, trace or positivity.
    #[error("invalid state: {0}")]
    State(String),

    /// A correlation was requested from zero counts.
    #[error("empty ensemble: no pairs recorded")]
    EmptyEnsemble,

    /// The Gaussian peak fit did not converge.
    #[error("fit did not converge after {iterations} iterations (best rms residual {best_rms:.3e})")]
    Fit { iterations: usize, best_rms: f64 },

    /// The two eigenstate densities cannot be told apart by the decoding kernel.
    #[error("indistinguishable densities: kernel denominator {denominator:.3e} is below threshold")]
    Indistinguishable { denominator: f64 },

    /// Not enough records to form an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed or invalid configuration.
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
