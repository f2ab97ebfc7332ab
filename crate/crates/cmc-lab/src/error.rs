use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metric matrix is singular or not positive definite at {at:?}")]
    SingularMetric { at: Vec<f64> },
    #[error("left the chart domain at parameter time {time}")]
    DomainExceeded { time: f64 },
    #[error("point {at:?} lies outside the chart domain (radius {radius})")]
    OutsideDomain { at: Vec<f64>, radius: f64 },
    #[error("frame is not orthonormal: Gram deviation {deviation:e}")]
    Frame { deviation: f64 },
    #[error("numerical conditioning: {0}")]
    Conditioning(String),
    #[error("insufficient precision at radius {radius}: {detail}")]
    Precision { radius: f64, detail: String },
    #[error("quadrature order insufficient: refinement disagreement {disagreement:e}")]
    Quadrature { disagreement: f64 },
    #[error("rank-deficient least-squares system")]
    RankDeficient,
    #[error("invalid dimension: {0}")]
    Dimension(String),
    #[error("maximum iterations ({0}) reached")]
    MaxIterations(usize),
}

impl GeomError {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            GeomError::Config(_) | GeomError::Dimension(_) => 2,
            GeomError::DomainExceeded { .. } | GeomError::OutsideDomain { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, GeomError>;
