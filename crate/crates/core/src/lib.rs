//! Finite-difference toolkit for the degenerate elliptic Dirichlet problem
//! `-½ ∂xx u + x^α ∂y u = f` on the unit square: weighted Sobolev norms,
//! verification studies, and a two-follower Nash control game.

// `!(x <= t)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
mod diff;
pub mod error;
pub mod fields;
mod float_serde;
pub mod game;
pub mod grid;
pub mod norms;
pub mod operator;
pub mod quad;
pub mod sparse;

pub use analysis::{StudyResult, Thresholds, Verdict};
pub use error::{Error, Result};
pub use game::{nash_solve, Game, GameConfig, NashResult};
pub use grid::{build_grid, weighted_inner, Grid, GridFunction, RegionMask, TracedFunction};
pub use norms::{norms_of, NormReport};
pub use operator::{assemble, solve_dirichlet, Scheme, SolveReport, SparseOperator};
pub use sparse::SolverKind;
