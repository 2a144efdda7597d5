use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reconstruction and volume pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth {0} (must be positive and finite)")]
    InvalidDepth(f64),

    #[error("gradient undefined at pixel ({u}, {v})")]
    GradientUndefined { u: usize, v: usize },

    #[error("no pixel produced a valid oriented point")]
    EmptyCloud,

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("need at least {required} point pairs, got {got}")]
    Arity { required: usize, got: usize },

    #[error("degenerate point configuration (rank deficient)")]
    RankDeficient,

    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    #[error("icp diverged after {iterations} iterations: all pairs rejected")]
    IcpDiverged {
        iterations: usize,
        last_motion: Box<crate::RigidMotion>,
    },

    #[error("point ({x}, {y}, {z}) lies outside the grid domain")]
    OutOfDomain { x: f64, y: f64, z: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("iso-surface is empty: no sign change in the field")]
    EmptyMesh,

    #[error("no ground plane found: {0}")]
    NoPlane(String),

    #[error("scan has no views")]
    EmptyScan,

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: png: {message}")]
    Png { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable code, used as the prefix of CLI error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDepth(_) => "E_DEPTH",
            Error::GradientUndefined { .. } => "E_GRADIENT",
            Error::EmptyCloud => "E_EMPTY_CLOUD",
            Error::InvalidIntrinsics(_) => "E_INTRINSICS",
            Error::Arity { .. } => "E_ARITY",
            Error::RankDeficient => "E_RANK",
            Error::AlignmentFailed(_) => "E_ALIGN",
            Error::IcpDiverged { .. } => "E_ICP",
            Error::OutOfDomain { .. } => "E_DOMAIN",
            Error::GridMismatch(_) => "E_GRID",
            Error::NoConvergence { .. } => "E_CG",
            Error::EmptyMesh => "E_EMPTY_MESH",
            Error::NoPlane(_) => "E_PLANE",
            Error::EmptyScan => "E_EMPTY_SCAN",
            Error::InvalidMesh(_) => "E_MESH",
            Error::InvalidParameter(_) => "E_PARAM",
            Error::Parse { .. } => "E_PARSE",
            Error::Io { .. } => "E_IO",
            Error::Png { .. } => "E_PNG",
        }
    }
}
