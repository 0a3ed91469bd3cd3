//! Solver library for step-function (0/1 loss) constrained optimization
//!
//! ```text
//! min f(x)   s.t.   ‖G(x)‖₀⁺ ≤ s,
//! ```
//!
//! where `G: R^K → R^{M×N}` and `‖Z‖₀⁺` counts the columns of `Z` whose
//! largest entry is strictly positive. With `G(x) = (g(x, ξ₁) … g(x, ξ_N))`
//! this is the sample average approximation of a (joint) chance constraint
//! at risk level `s / N`.
//!
//! The crate is organised as:
//!
//! - [`geometry`]: the `‖·‖₀⁺` count, column partitions, the candidate
//!   index-set family, the projection onto `S = {Z : ‖Z‖₀⁺ ≤ s}` and
//!   tangent / normal cone membership tests.
//! - [`problem`]: the [`Problem`](problem::Problem) trait plus the
//!   norm-optimization benchmark and a small nonconvex counterexample.
//! - [`stationarity`]: the stationarity residual `F(w; V)`, its smoothed
//!   Jacobian, and KKT / τ-stationary / binary-KKT checkers.
//! - [`solver`]: the smoothing Newton iteration.
//! - [`statistics`]: sample-size bounds and a Monte-Carlo feasibility harness.
//! - [`baselines`]: brute-force grid search and big-M LP export.
//!
//! All column and row indices are zero-based.

#![allow(clippy::too_many_arguments)]

pub mod baselines;
pub mod error;
pub mod geometry;
pub mod nnls;
pub mod problem;
pub mod solver;
pub mod stationarity;
pub mod statistics;

pub use error::{Error, Result};
pub use geometry::SampleMatrix;
pub use problem::{Dims, NormOptInstance, Problem};
pub use solver::{solve, SolveResult, SolveStatus, SolverConfig};
pub use stationarity::{ActiveSet, PrimalDualPoint, StationarityReport};
