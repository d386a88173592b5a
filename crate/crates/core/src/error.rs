use thiserror::Error;

/// Errors raised anywhere in the PICAR pipeline.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum PicarError {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),

    #[error("point ({x}, {y}) lies outside the mesh")]
    OutOfMesh { x: f64, y: f64 },

    #[error("location {row} ({x}, {y}) lies outside the mesh")]
    OutOfMeshRow { row: usize, x: f64, y: f64 },

    #[error("eigensolver failed to converge after {restarts} restarts (worst residual {residual:e})")]
    EigensolverFailure { restarts: usize, residual: f64 },

    #[error("singular precision kernel: {0}")]
    SingularKernel(String),

    #[error("unsupported Matérn smoothness {0}; supported values are 0.5, 1.5, 2.5 and infinity")]
    UnsupportedSmoothness(f64),

    #[error("covariance matrix is not positive definite even after jitter")]
    CovarianceSingular,

    #[error("cutoffs must be strictly increasing with the first equal to 0, got {0:?}")]
    InvalidCutoffs(Vec<f64>),

    #[error("cross-covariance matrix is not symmetric positive definite")]
    CrossCovarianceNotSpd,

    #[error("ordinal categories never observed: {0:?}")]
    EmptyCategories(Vec<usize>),

    #[error("rank selection failed: no candidate rank produced a converged fit")]
    SelectionFailed,

    #[error("non-finite log-likelihood at observation {index}")]
    NonFiniteLoglik { index: usize },

    #[error("non-finite log-likelihood at iteration {iteration}, observation {index}")]
    ChainFailure { iteration: usize, index: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        source: Box<PicarError>,
    },
}

impl PicarError {
    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn in_stage(self, stage: &str) -> Self {
        PicarError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage labels.
    pub fn root(&self) -> &PicarError {
        match self {
            PicarError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for PicarError {
    fn from(e: std::io::Error) -> Self {
        PicarError::Io(e.to_string())
    }
}

impl From<csv::Error> for PicarError {
    fn from(e: csv::Error) -> Self {
        PicarError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PicarError>;
