//! Nash equilibria of smooth general-sum games under the n-sided
//! Polyak-Łojasiewicz condition.
//!
//! The crate provides block vectors, the game abstraction with the gap
//! function F - G_F, exact and approximated best responses, the random,
//! cyclic and adaptive block-coordinate solvers, a registry of benchmark
//! games, linear-quadratic games and sample-based certificates for the
//! inequalities the convergence analysis relies on.

// negated comparisons are deliberate: they treat NaN as failing the test
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bestresponse;
pub mod blockvec;
pub mod diagnostics;
pub mod error;
pub mod game;
pub mod lqgame;
pub mod problems;
pub mod scalar;
pub mod solvers;

pub use bestresponse::{abr, abr_iters_for, exact_best_responses, gap, BestResponseResult, ResponseSource};
pub use blockvec::{BlockLayout, BlockVector, Norms};
pub use error::{Error, Result};
pub use game::{FnGame, Game, ProblemConstants, Provenance};
pub use problems::{registry_get, ProblemSpec, TestBox, PROBLEM_NAMES};
pub use solvers::{CaseDecision, CaseTag, IterationRecord, RunResult, RunStatus, SolverConfig, Variant};
