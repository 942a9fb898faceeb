//! Error types shared by the grid operations and the iterative solvers.

use thiserror::Error;

/// Construction-time validation failures for grids and fields.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("grid must be at least 2x2, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("value buffer has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("grid contains a non-finite value at flat index {index}")]
    NonFinite { index: usize },
}

/// Rejected model or solver parameter.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("parameter {name} must be {constraint}, got {got}")]
pub struct ParamError {
    pub name: &'static str,
    pub constraint: &'static str,
    pub got: f64,
}

impl ParamError {
    pub fn new<T: num_traits::ToPrimitive>(
        name: &'static str,
        constraint: &'static str,
        got: T,
    ) -> Self {
        Self {
            name,
            constraint,
            got: got.to_f64().unwrap_or(f64::NAN),
        }
    }
}

/// Failures of the iterative solvers (resolvent steps, Poisson solves,
/// dual sweeps, descent loops).
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("iteration limit {max_iters} exceeded; residual {residual:e} > tolerance {tol:e}")]
    IterationLimitExceeded {
        max_iters: usize,
        residual: f64,
        tol: f64,
    },
    #[error("energy or gradient evaluated to a non-finite value{}", step_context(.step))]
    NonFiniteEnergy { step: Option<usize> },
    #[error("descent stopped without meeting the tolerance; last update norm {residual:e}")]
    NotConverged { residual: f64 },
    #[error("step {step} failed: {source}")]
    StepFailed {
        step: usize,
        #[source]
        source: Box<SolveError>,
    },
    #[error("sparse observation list is empty")]
    EmptyObservation,
    #[error("invalid sparse observation: {0}")]
    InvalidObservation(String),
    #[error("oracle restricted to grids of at most {max}x{max}, got {rows}x{cols}")]
    GridTooLarge { rows: usize, cols: usize, max: usize },
    #[error("dense system is singular at pivot {pivot}")]
    SingularSystem { pivot: usize },
    #[error("{op} requires {required:?} boundary conditions, got {got:?}")]
    UnsupportedBoundary {
        op: &'static str,
        required: crate::grid::BoundaryCondition,
        got: crate::grid::BoundaryCondition,
    },
}

fn step_context(step: &Option<usize>) -> String {
    match step {
        Some(i) => format!(" at step {i}"),
        None => String::new(),
    }
}

impl SolveError {
    /// Wraps an error with the index of the evolution step that produced it.
    pub fn at_step(self, step: usize) -> SolveError {
        SolveError::StepFailed {
            step,
            source: Box::new(self),
        }
    }
}
