use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graphon argument ({x}, {y}) outside [0, 1]^2")]
    Domain { x: f64, y: f64 },
    #[error("matrix is not symmetric: max |M - M^T| = {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("all retained eigenvalues are numerically zero")]
    DegenerateSpectrum,
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty point cloud")]
    EmptyCloud,
    #[error(
        "sign signatures differ: graph 1 has ({pos1} positive, {neg1} negative), \
         graph 2 has ({pos2} positive, {neg2} negative); check the embedding dimension"
    )]
    SignatureMismatch {
        pos1: usize,
        neg1: usize,
        pos2: usize,
        neg2: usize,
    },
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
