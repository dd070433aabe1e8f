//! Separated-representation solvers: the energy form on rank-one functions,
//! the alternating rank-one solver and the pure/orthogonal greedy loops.

mod algorithms;
pub mod als;
pub mod dense;
mod form;
mod separated;

pub use algorithms::{
    run, run_oga, run_pga, solve_gram, stopping_surrogate, Algorithm, GreedyConfig, GreedyProblem, GreedyTrace,
    IterationRecord, Termination, GRAM_CONDITION_LIMIT,
};
pub use als::{als_multistart, als_rank1, euler_lagrange_residual, AlsConfig, AlsOutcome};
pub use form::{EnergyForm, FactorOp, OperatorTerm};
pub use separated::{RankOneTerm, SeparatedFunction, SeparatedFunctional};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreedyError {
    #[error("coupling matrix must be square and nonempty, got {0}x{1}")]
    CouplingShape(usize, usize),
    #[error("coupling matrix is not symmetric at ({row}, {col})")]
    CouplingNotSymmetric { row: usize, col: usize },
    #[error("coupling matrix is not positive definite: eigenvalue {eigenvalue:e}")]
    CouplingNotPositiveDefinite { eigenvalue: f64 },
    #[error("parameter {name} must be positive and finite, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("expected {expected} factors, got {got}")]
    FactorCount { expected: usize, got: usize },
    #[error("factor {factor}: expected {expected} coefficients, got {got}")]
    DimensionMismatch { factor: usize, expected: usize, got: usize },
    #[error("initial rank-one term has a zero factor")]
    DegenerateInit,
    #[error("slot {slot} sub-system is singular (frozen factors vanish)")]
    SingularSubsystem { slot: usize },
    #[error("objective increased in sweep {sweep}: {before:e} -> {after:e}")]
    NonDecreasing { sweep: usize, before: f64, after: f64 },
    #[error("Gram matrix is singular (condition estimate {condition:e})")]
    SingularGram { condition: f64 },
    #[error("trace has no iterations")]
    EmptyTrace,
    #[error("exact dual norm refused: {dofs} total dof exceeds budget {budget}")]
    ExactDualRefused { dofs: usize, budget: usize },
    #[error("dense operator is not positive definite")]
    DenseNotPositiveDefinite,
    #[error("iteration {n}: {source}")]
    AtIteration {
        n: usize,
        #[source]
        source: Box<GreedyError>,
    },
}
