use nalgebra::Complex;
use thiserror::Error;

/// Crate-wide error type. The CLI maps these onto its exit-code contract:
/// input problems -> 1, condition/certificate failures -> 2, simulation
/// infeasibility -> 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry")]
    NonFinite,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid system dimensions: {0}")]
    DimensionError(String),

    #[error("parse error: {0}")]
    ParseError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("iterative solver failed to converge: {0}")]
    NoConvergence(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error(
        "solvability condition H1 fails: rank augmented {rank_psi1} != rank base {rank_gamma1}"
    )]
    H1Failed {
        rank_psi1: usize,
        rank_gamma1: usize,
    },

    #[error("detectability condition H2 fails at lambda = {witness}")]
    H2Failed { witness: Complex<f64> },

    #[error("pair is not detectable: rank drop at lambda = {witness}")]
    NotDetectable { witness: Complex<f64> },

    #[error("problem too large for the dense solvability check (n = {n}, cap = {cap})")]
    TooLarge { n: usize, cap: usize },

    #[error("certificate residual {value:.3e} exceeds tolerance {tol:.3e} ({which})")]
    ResidualTooLarge {
        which: &'static str,
        value: f64,
        tol: f64,
    },

    #[error("dynamics matrix is not stable: max Re eig = {max_re:.3e}")]
    Unstable { max_re: f64 },

    #[error("pole placement failed: {0}")]
    PlacementFailed(String),

    #[error("initial condition infeasible: constraint residual {residual:.3e} cannot be removed")]
    Infeasible { residual: f64 },

    #[error("stacked derivative system is inconsistent at t = {t}: residual {residual:.3e}")]
    InconsistentDynamics { t: f64, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
