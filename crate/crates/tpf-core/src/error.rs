//! Crate-wide error type.
//!
//! Numerical routines report structured failures instead of panicking so the
//! CLI can map them onto stable exit codes and the C API onto status codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Symmetry or positive-definiteness check failed.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    /// A linear system turned out rank-deficient.
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("sampling time s={0} outside [0, 1]")]
    SOutOfRange(f64),
    /// A state or field value became NaN/inf mid-computation.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("flow Jacobian is numerically singular (|det| = {0:e})")]
    SingularJacobian(f64),
    #[error("degenerate time grid: {0}")]
    DegenerateGrid(String),
    #[error("point clouds have mismatched sizes: {0}")]
    CloudSizeMismatch(String),
    #[error("CFL violation: {0}")]
    CflViolation(String),
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    #[error("empty or degenerate fit range: {0}")]
    EmptyRange(String),
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for the CLI: 2 config, 3 data/generator,
    /// 4 missing artifact, 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::CflViolation(_) | Error::CloudSizeMismatch(_) => 3,
            Error::MissingArtifact(_) => 4,
            _ => 5,
        }
    }
}
