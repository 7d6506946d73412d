//! Saddle-form splitting for structured multivariate monotone inclusions.
//!
//! A problem couples, for each primal block `i`, a maximally monotone `A_i`,
//! a cocoercive `C_i`, a monotone Lipschitzian `Q_i` and a joint coupling
//! `R`, with dual blocks `k` carrying parallel sums
//! `(B_k^m + B_k^c + B_k^l) □ (D_k^m + D_k^c + D_k^l)` through linear maps
//! `L_ki`. The solvers look for a zero of the associated saddle operator on
//! `H ⊕ G ⊕ G ⊕ G` by projecting onto half-spaces built from resolvent
//! steps, activating only some blocks per iteration and reading possibly
//! stale state.
//!
//! Module map:
//! - [`blockspace`]: vectors over direct sums of coordinate spaces.
//! - [`operators`]: resolvent, cocoercive, Lipschitz-monotone and linear
//!   operator catalog.
//! - [`problem`]: the problem data model and Kuhn–Tucker residuals.
//! - [`saddle`]: the cocoercive part of the saddle operator and half-space cuts.
//! - [`schedule`]: block activation, bounded lags and state history.
//! - [`solver`]: the weakly and strongly convergent iterations.
//! - [`frontends`]: variational-inequality and minimization embeddings.
//! - [`cli`]: problem files, run configuration and output writers.
//! - [`fixtures`]: small problems with known solutions.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blockspace;
pub mod cli;
mod error;
pub mod fixtures;
pub mod frontends;
pub mod operators;
pub mod problem;
pub mod saddle;
pub mod schedule;
pub mod solver;

pub use blockspace::{BlockVec, SpaceLayout, StateX};
pub use error::{Error, Result};
pub use problem::{KtCandidate, ProblemSpec};
pub use schedule::{HistoryBuffer, LagPolicy, Policy, Schedule};
pub use solver::{run, SolveReport, StepParams, StopReason, StopRule, Variant};
