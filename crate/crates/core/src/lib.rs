//! Optimistic follow-the-regularized-leader with smooth value updates for
//! finite-horizon two-player zero-sum Markov games.
//!
//! - [`game`]: tabular games, policies, fixtures and the game file format.
//! - [`weights`]: the `alpha_t = (H+1)/(H+t)` schedule and its profile.
//! - [`solver`]: the iteration itself.
//! - [`equilibrium`]: exact evaluation (best responses, Nash gap, Q*).
//! - [`diagnostics`]: online regrets, estimation errors and bound slacks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod equilibrium;
pub mod game;
mod kernels;
pub mod rng;
pub mod solver;
pub mod weights;

pub use diagnostics::{fit_rate, IterationMetrics, RateFit};
pub use equilibrium::{best_response, matrix_game_solve, nash_q, ne_gap, policy_value};
pub use game::{Fixture, MarkovGame, Policy, PolicyPair, Shape, Side};
pub use solver::{run, RunResult, Solver, SolverConfig};
pub use weights::WeightSchedule;
