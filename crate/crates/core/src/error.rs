//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong when validating inputs or running solvers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Density matrix is not Hermitian.
    #[error("matrix is not Hermitian: max |rho - rho^dag| entry = {max_dev:.3e}")]
    NotHermitian { max_dev: f64 },

    /// Density matrix trace differs from one.
    #[error("trace is not one: tr(rho) = {trace}, |tr - 1| = {dev:.3e}")]
    TraceNotOne { trace: f64, dev: f64 },

    /// Matrix has a negative eigenvalue beyond tolerance.
    #[error("matrix is not positive semidefinite: min eigenvalue = {min_eig:.6e}")]
    NotPositive { min_eig: f64 },

    /// Shapes of the supplied operands do not agree.
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    /// Bell scenarios need at least two settings per party.
    #[error("setting count must be >= 2, got {n}")]
    InvalidSettingCount { n: usize },

    /// Measurement direction is not a unit vector.
    #[error("measurement vector has norm {norm}, expected 1 within 1e-12")]
    NotUnitVector { norm: f64 },

    /// Probability table violates a behavior invariant.
    #[error("invalid behavior: {reason} (deviation {dev:.3e})")]
    InvalidBehavior { reason: String, dev: f64 },

    /// Marginals depend on the remote setting beyond tolerance.
    #[error("no-signaling violated: max marginal deviation {max_dev:.3e}")]
    NoSignalingViolated { max_dev: f64 },

    /// Mixing parameter outside [0, 1].
    #[error("visibility must lie in [0, 1], got {p}")]
    VisibilityOutOfRange { p: f64 },

    /// Family parameter outside [0, pi/12].
    #[error("gamma must lie in [0, pi/12], got {gamma}")]
    GammaOutOfRange { gamma: f64 },

    /// Correlation matrix is numerically zero; saturating measurements are undefined.
    #[error(
        "correlation matrix is numerically zero (sigma_max = {sigma_max:.3e}); \
         the bound is 0 and trivially attained, no witness exists"
    )]
    DegenerateCorrelation { sigma_max: f64 },

    /// Interior-point iteration broke down.
    #[error("numerical trouble in SDP solve: {detail}")]
    NumericalTrouble { detail: String },

    /// A downstream SDP solve did not reach optimality.
    #[error("SDP solver failed: {detail}")]
    SolverFailure { detail: String },

    /// Requested Bell value exceeds what the relaxation can reach.
    #[error(
        "infeasible: observed value {observed} exceeds the relaxation maximum {relaxation_max}"
    )]
    InfeasibleViolation { observed: f64, relaxation_max: f64 },

    /// Behavior lies outside the chosen relaxation of the quantum set.
    #[error("infeasible: behavior outside the relaxation (primal residual {residual:.3e})")]
    InfeasibleBehavior { residual: f64 },

    /// Guessing probability must be positive to take a logarithm.
    #[error("probability must be positive, got {p}")]
    NonpositiveProbability { p: f64 },

    /// Exhaustive search would exceed the evaluation budget.
    #[error("grid search would need {evaluations} evaluations, budget is {budget}")]
    BudgetExceeded { evaluations: u128, budget: u128 },

    /// Catch-all for malformed parameters.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
