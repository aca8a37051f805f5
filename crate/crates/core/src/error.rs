use std::path::PathBuf;

/// Errors produced anywhere in the estimation/control pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("matrix is not symmetric positive (semi-)definite: {0}")]
    NotPositiveDefinite(String),
    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    DareNotConverged { iterations: usize, residual: f64 },
    #[error("closed loop is not stable (spectral radius {0:.6})")]
    Unstable(f64),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("innovation covariance is numerically singular")]
    SingularInnovation,
    #[error("measurement mask does not match supplied readings: {0}")]
    MaskMismatch(String),
    #[error("plant diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}
