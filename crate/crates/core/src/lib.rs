//! Numerical toolkit for the annealed parabolic Anderson model on a
//! (d+1)-regular tree: truncated-ball and renewal-unit graphs, the
//! Dirichlet-form + entropy variational problem for the Lyapunov exponent
//! chi, Legendre transforms of the sojourn laws that drive the
//! Markov-renewal description of the walk, and Monte Carlo experiments
//! that cross-check the variational answers.
//!
//! Layout:
//! - [`graphs`]: regular-tree balls, renewal units with tadpole loops,
//!   the depth chain, and their jump kernels.
//! - [`prob`]: validated probability vectors on graph vertex sets.
//! - [`functionals`]: Dirichlet energy, entropy, the chi objective and its
//!   gradient, and the double-exponential cumulant scaling check.
//! - [`sojourn`]: holding-time laws (pure exponential and tree return
//!   time), their cumulant generating functions, Legendre transforms and
//!   samplers.
//! - [`solver`]: entropic mirror descent for the chi variational problem,
//!   principal Dirichlet eigenvalues, scans and minimiser diagnostics.
//! - [`simulate`]: killed/projected random-walk experiments and exponent
//!   estimators.
//! - [`experiment`]: run configuration, CSV emission with self-describing
//!   headers, and grid parsing shared by the CLI.

// `!(x > 0.0)` is the NaN-rejecting spelling of a domain check; `x <= 0.0`
// silently admits NaN. Indexed loops stay because most of them walk several
// slices in lockstep under recurrence indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod experiment;
pub mod functionals;
pub mod graphs;
pub mod prob;
pub mod simulate;
pub mod sojourn;
pub mod solver;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
