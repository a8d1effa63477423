use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate triangle (signed area {area:e})")]
    DegenerateTriangle { area: f64 },

    #[error("metric tensor is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("diffusion tensor is not SPD at the centroid of element {element}")]
    DiffusionNotSpd { element: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("Newton line search failed after {halvings} halvings (residual {residual:e})")]
    NewtonDivergence { halvings: usize, residual: f64 },

    #[error("Newton iteration did not converge in {iterations} steps (residual {residual:e})")]
    NewtonMaxIterations { iterations: usize, residual: f64 },

    #[error("problem kind mismatch: {0}")]
    ProblemKind(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("vertex {vertex} patch has only {points} points; use a global fit on a mesh this small")]
    PatchTooSmall { vertex: usize, points: usize },

    #[error("point ({x}, {y}) could not be located in the mesh")]
    PointLocation { x: f64, y: f64 },

    #[error("metric field has zero volume")]
    ZeroMetricVolume,

    #[error("expected a {expected}-based metric field")]
    MetricBasis { expected: &'static str },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

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
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
