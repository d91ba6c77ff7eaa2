use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("quadrature did not converge: estimated error {achieved:e} above tolerance {tol:e}")]
    Quadrature { achieved: f64, tol: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
