use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge: achieved error {achieved:e}, requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("no convergence after {iterations} iterations (last iterate {last}, |residual| = {residual:e})")]
    NoConvergence {
        iterations: usize,
        last: Complex64,
        residual: f64,
    },

    #[error("root {0} lies outside the search domain")]
    OutsideDomain(Complex64),

    #[error("singular discrete system: {0}")]
    Singular(String),

    #[error("fixed-point map is not contracting: measured Lipschitz estimate {lipschitz:.3e}")]
    NotContracting { lipschitz: f64 },

    #[error("design infeasible: {0}")]
    InfeasibleDesign(String),

    #[error("biorthogonality violated: max |Gram - I| = {max_deviation:e}")]
    Biorthogonality { max_deviation: f64 },

    #[error("rank deficient system: rank {rank} of {needed}")]
    RankDeficient { rank: usize, needed: usize },

    #[error("|X| = {norm:e} exceeds the guard radius {limit:e}")]
    GuardExceeded { norm: f64, limit: f64 },

    #[error("state left the trust region at t = {t}")]
    Escaped { t: f64 },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
