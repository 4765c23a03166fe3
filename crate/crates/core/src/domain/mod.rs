//! Positive solutions of `Q⁺u + u^p = 0` and `M⁺u + u^p = 0` on
//! axisymmetric perturbations of the unit ball, continued from the radial
//! solution by Newton's method and policy iteration.

pub mod discrete;
pub mod grid;
pub mod io;
pub mod solver;
pub mod sparse;

use thiserror::Error;

pub use discrete::{discretize_q_plus, pucci_fd_apply, pucci_minus_fd_apply, HessianStencils};
pub use grid::{build_grid, MeridianGrid, PerturbedBall, Shape};
pub use solver::{
    continuation_in_epsilon, homotopy_in_s, radial_baseline, radial_seed, solve_semilinear, Continuation,
    ContinuationSpec, DiscreteSolution, ExponentPath, HomotopyResult, HomotopySpec, OperatorKind, SolveOptions,
};

use crate::operators::OperatorError;
use crate::radial::RadialError;
use sparse::LinearError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid domain or input: {0}")]
    InvalidDomain(String),
    #[error("grid failure at epsilon = {epsilon}: {reason}")]
    GridFailure { epsilon: f64, reason: String },
    #[error("Newton iteration diverged (residuals {history:?})")]
    Divergence { history: Vec<f64> },
    #[error("Newton iteration did not converge (last residual {residual:e})")]
    MaxIterations { residual: f64, history: Vec<f64> },
    #[error("solution is not positive inside the domain (min {min:e})")]
    PositivityFailure { min: f64 },
    #[error("iteration collapsed to the trivial solution (max {max:e})")]
    Collapse { max: f64 },
    #[error("continuation failed at epsilon = {epsilon}: {source}")]
    ContinuationFailure { epsilon: f64, source: Box<DomainError> },
    #[error("homotopy failed at s = {s}: {source}")]
    HomotopyFailure { s: f64, source: Box<DomainError> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Radial(#[from] RadialError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("i/o: {0}")]
    Io(String),
}

impl DomainError {
    /// True for failures of the iteration itself (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            DomainError::Divergence { .. }
            | DomainError::MaxIterations { .. }
            | DomainError::PositivityFailure { .. }
            | DomainError::Collapse { .. }
            | DomainError::Linear(_) => true,
            DomainError::ContinuationFailure { source, .. } | DomainError::HomotopyFailure { source, .. } => {
                source.is_solver_failure()
            }
            _ => false,
        }
    }
}
