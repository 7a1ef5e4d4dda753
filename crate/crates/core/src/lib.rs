//! Lower and upper robust controlled invariant sets of state-constrained
//! two-player differential games.
//!
//! The invariant sets are the zero sets of the value functions
//! V^∓(x) = inf/sup over strategies of sup_t e^{−γt} h(x(t)), which solve the
//! variational inequalities min{γV − H^∓(x, ∇V), V − h} = 0. This crate
//! solves those on a grid, extracts the sets, synthesizes feedback from the
//! solution and checks invariance in closed loop.

pub mod cli;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod oracle;
pub mod setops;
pub mod solver;
pub mod synthesis;

pub use dynamics::{builtin_model, ActionBox, GameModel};
pub use error::{Error, Result};
pub use grid::{Grid, ValueField, ValueKind};
pub use hamiltonian::{HamiltonianEvaluator, HamiltonianSettings};
pub use solver::{solve, solve_both_values, solve_fd, solve_sl, Backend, SolveConfig, SolveReport};
