//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("eigensolver did not converge: residual {residual:.3e} after {iterations} iterations")]
    EigenNonConvergence { residual: f64, iterations: usize },

    #[error("ill-conditioned basis: {0}")]
    IllConditioned(String),

    #[error("pair is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("Hamiltonian eigenvalue within {0:.1e} of the imaginary axis; Riccati equation is non-dichotomic")]
    NonDichotomic(f64),

    #[error("Hautus test failed: {0}")]
    HautusFailed(String),

    #[error("non-finite state at t = {time}, step {step}")]
    NumericalBlowup { time: f64, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Mesh(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
