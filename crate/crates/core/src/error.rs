//! Error type shared by every module of the engine.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("ions {i} and {j} are within {separation:e} of each other; the Coulomb term diverges")]
    CoincidentIons { i: usize, j: usize, separation: f64 },

    #[error(
        "equilibrium solver failed to converge: residual {residual:e} after {iterations} \
         iterations (tolerance {tolerance:e})"
    )]
    NoConvergence {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error(
        "normal modes are unstable ({branch} branch, minimum squared frequency \
         {min_squared_frequency:e}); this operation requires a stable linear chain"
    )]
    UnstableModes {
        branch: &'static str,
        min_squared_frequency: f64,
    },

    #[error("state space too large for enumeration: {modes} modes exceeds the limit of {limit}")]
    StateSpaceOverflow { modes: usize, limit: usize },

    #[error("full quartic mode tensor not built; construct it with mode_tensors_full")]
    MissingFullQuartic,

    #[error("drive frequency mu = {mu:e} is resonant with mode {mode} (frequency {frequency:e})")]
    ResonantDrive {
        mode: usize,
        mu: f64,
        frequency: f64,
    },

    #[error("temperature must be nonnegative, got {0}")]
    NegativeTemperature(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
