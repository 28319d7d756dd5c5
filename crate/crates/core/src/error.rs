use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("negative rate for {0}")]
    NegativeRate(&'static str),
    #[error("non-finite values produced by {0}")]
    NonFinite(&'static str),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("singular calibration matrix (determinant {0:.3e})")]
    SingularCalibration(f64),
    #[error("channel is not linear within tolerance (deviation {0:.3e})")]
    NonLinearChannel(f64),
    #[error("quadrature did not converge (estimated error {0:.3e})")]
    Quadrature(f64),
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
