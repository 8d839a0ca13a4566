use thiserror::Error;

/// Location of the worst offending grid point, used by cone and positivity errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstPoint {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("axis {axis} out of range for complex dimension {n}")]
    AxisOutOfRange { axis: usize, n: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field is not real: imaginary part {imag:e} exceeds tolerance")]
    NotReal { imag: f64 },

    #[error("tensor is not positive definite at point {} (smallest eigenvalue {:e})", .0.index, .0.value)]
    NotPositive(WorstPoint),

    #[error("matrix is numerically singular")]
    Singular,

    #[error("eigenvalues left the admissible cone at point {} (offending value {:e})", .0.index, .0.value)]
    ConeViolation(WorstPoint),

    #[error("conformal factor changed sign at point {} (value {:e})", .0.index, .0.value)]
    NonPositiveFactor(WorstPoint),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("continuation step fell below {min_step:e} at t = {t}")]
    StepFailure {
        t: f64,
        min_step: f64,
        last_good: Box<crate::solver::SolverState>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed field dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
