//! Origin-destination correspondence matrices via the entropy model.
//!
//! The library estimates how many commuters travel from each origin zone to
//! each destination zone given only per-zone departure/arrival totals and a
//! generalized travel-cost matrix. The estimate is the entropy-model matrix:
//! the minimizer of `sum d*T + sum d*ln(d)` over nonnegative matrices with
//! prescribed row and column sums. Two solvers are provided, both working on
//! the dual problem in log domain:
//!
//! * [`solvers::sinkhorn_solve`] — alternating exact minimization over the
//!   two dual blocks (classic matrix scaling),
//! * [`solvers::accelerated_solve`] — an adaptive accelerated variant with
//!   greedy block choice and an averaged primal reconstruction.
//!
//! On top of the solvers, [`costs`] defines five parametric families mapping
//! observed mean travel time / straight-line distance to generalized cost,
//! and [`calibrate`] fits those parameters against an observed correspondence
//! matrix by minimizing a squared residual (exhaustive grid search plus
//! gradient-free alternatives: simulated annealing, the Piyavskii broken-line
//! method, and random multistart). [`data`] handles the five-column survey
//! CSV format and can generate synthetic survey tables for closed-loop tests.
//!
//! Grid sweeps evaluate points in parallel via rayon when the default
//! `parallel` feature is enabled; disabling it falls back to a sequential
//! sweep with identical results.

pub mod calibrate;
pub mod costs;
pub mod data;
pub mod dual;
pub mod solvers;
pub mod types;

pub use types::{
    CorrespondenceMatrix, CostMatrix, DualPotentials, Marginals, Scale, SolveReport, SolverConfig,
};

/// Errors shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zone count mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("departure total {departures} differs from arrival total {arrivals}")]
    TotalsMismatch { departures: f64, arrivals: f64 },
    #[error("all entries are zero")]
    AllZero,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative value in {0}")]
    Negative(&'static str),
    #[error("matrix sums to {sum}, expected {expected} at {scale:?} scale")]
    BadTotal { sum: f64, expected: f64, scale: Scale },
    #[error("expected a matrix at {expected:?} scale, got {got:?}")]
    ScaleMismatch { expected: Scale, got: Scale },
    #[error("{block} marginal entry {index} is zero; drop empty zones before solving")]
    ZeroMarginal { block: &'static str, index: usize },
    #[error("invalid solver config: {0}")]
    InvalidConfig(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("Lipschitz search diverged")]
    LipschitzSearchDiverged,
    #[error("no grid point converged")]
    NoConvergedPoint,
    #[error("objective returned a non-finite value at {point:?}")]
    NonFiniteObjective { point: Vec<f64> },
    #[error("evaluation budget exceeded ({0} evaluations)")]
    BudgetExceeded(usize),
    #[error("line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("empty observation table")]
    EmptyTable,
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("malformed problem bundle: {0}")]
    BadBundle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
