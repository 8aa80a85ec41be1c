//! Bounds and device-independent randomness certification for the chained
//! Bell functional on two-qubit states.
//!
//! The crate has five pieces:
//!
//! - [`qstate`]: validated two-qubit density matrices, Bloch decomposition,
//!   and the correlation-matrix SVD that drives the quantum bound.
//! - [`bell`]: the chained functional itself — classical/quantum bounds, the
//!   state-dependent upper bound `2n cos(pi/2n) sigma_max`, saturating
//!   measurements, probability tables, the white-noise model, and the
//!   unit-diagonal Gram program.
//! - [`sdp`]: a self-contained dense interior-point solver for small
//!   block-diagonal semidefinite programs.
//! - [`npa`]: moment-matrix relaxations of the quantum set (levels Q1, 1+AB,
//!   Q2) and guessing-probability certificates from either an observed Bell
//!   value or complete measurement statistics.
//! - [`search`]: particle-swarm and grid search over measurement directions,
//!   the independent numerical check that the bound is attained.

pub mod bell;
pub mod error;
pub mod npa;
pub mod qstate;
pub mod sampling;
pub mod sdp;
pub mod search;

pub use bell::{Behavior, BellCoefficients, GramSolution, MeasurementSet, TightnessReport};
pub use error::{Error, Result};
pub use npa::{CertResult, ConstraintMode, MomentProgram, MonomialBasis, NpaLevel, Scenario};
pub use qstate::{BlochForm, SvdReport, TwoQubitState};
pub use sdp::{
    Constraint, ResidualReport, SdpProblem, SdpSolution, Sense, SolveOptions, SolverStatus,
};
pub use search::{SearchResult, SwarmConfig};
