use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("matrix is not Hermitian")]
    NotHermitian,
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0})")]
    NotPositiveSemidefinite(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("result table is empty")]
    EmptyTable,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
