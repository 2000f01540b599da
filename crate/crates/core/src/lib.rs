//! Numerical laboratory for off-policy fitted Q-iteration.
//!
//! Finite MDPs serve as exact oracles: every finite-sample bound is turned
//! into a check of the form "realized quantity ≤ bound value", reported
//! through [`bounds::BoundReport`].

pub mod batch;
pub mod bounds;
pub mod classes;
pub mod complexity;
pub mod error;
pub mod experiment;
pub mod fqi;
pub mod mdp;
pub mod seeding;

pub use error::{Error, Result};
