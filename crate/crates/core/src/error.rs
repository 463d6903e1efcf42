use thiserror::Error;

/// Errors raised anywhere in the estimation and prediction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate location: points {first} and {second} coincide")]
    DuplicateLocation { first: usize, second: usize },

    #[error("location {index} has coordinate {value} outside [0, 1]")]
    OutOfDomain { index: usize, value: f64 },

    #[error("unknown cube (level {level}, code {code})")]
    UnknownCube { level: i32, code: u64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid kernel parameters: {0}")]
    InvalidKernel(String),

    #[error("spline mesh exceeded {cap} nodes; worst element [{left}, {right}] has bound {bound:e}")]
    SplineNodeCap {
        cap: usize,
        left: f64,
        right: f64,
        bound: f64,
    },

    #[error("design matrix of degree {degree} is rank deficient: rank {rank} < {required}")]
    RankDeficient {
        degree: u32,
        rank: usize,
        required: usize,
    },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("tapered covariance (tau = {tau}, min level {min_level}) is not positive definite at pivot {pivot}; increase tau or f_tilde")]
    TaperNotPositiveDefinite { pivot: usize, tau: String, min_level: i32 },

    #[error("{0}")]
    Numerical(String),

    #[error("lemma bound undefined: enclosing balls overlap (distance {distance}, radii {r_a} + {r_b})")]
    OverlappingBalls { distance: f64, r_a: f64, r_b: f64 },

    #[error("iterative solver did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
        report: Box<crate::linalg::PcgReport>,
    },

    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True when the error signals a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::TaperNotPositiveDefinite { .. }
                | Error::Numerical(_)
                | Error::NotConverged { .. }
                | Error::RankDeficient { .. }
                | Error::SplineNodeCap { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
