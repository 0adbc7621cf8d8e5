use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive background state at ({x1}, {x2}, {t}): rho = {rho}, theta = {theta}")]
    NonPositiveState {
        x1: f64,
        x2: f64,
        t: f64,
        rho: f64,
        theta: f64,
    },
    #[error("invalid equation of state: {0}")]
    InvalidEos(String),
    #[error("unsupported background: {0}")]
    UnsupportedBackground(String),
    #[error("CFL violation: dt = {dt} exceeds the limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("initial data violates the boundary data by {0}")]
    BoundaryInconsistency(f64),
    #[error("non-positive coefficient {name} = {value}")]
    NonPositiveCoefficient { name: &'static str, value: f64 },
    #[error("singular block in tridiagonal solve at row {row} (determinant {det})")]
    SingularBlockSystem { row: usize, det: f64 },
    #[error("compatibility violation: {0}")]
    CompatibilityViolation(String),
    #[error("time derivative requested at level {level} without zero history")]
    InsufficientHistory { level: usize },
    #[error("layer of order {order} is required but missing")]
    MissingPriorLayer { order: usize },
    #[error("right-hand side does not decay: tail maximum {tail} exceeds {tol}")]
    NonDecayingRhs { tail: f64, tol: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("grid too coarse for layer: {cells} cells inside x1 < {epsilon}, need at least 8")]
    GridTooCoarseForLayer { cells: usize, epsilon: f64 },
    #[error("error values must be positive for a log-log fit")]
    NonPositiveError,
    #[error("linear solver did not converge: residual {residual} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("order {order}, {stage}: {source}")]
    Stage {
        order: usize,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_stage(self, order: usize, stage: &'static str) -> Self {
        Error::Stage {
            order,
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
