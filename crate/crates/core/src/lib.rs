//! Exact-gradient policy optimization across three problem families:
//! tabular MDPs, two-player zero-sum matrix and Markov games, and the linear
//! quadratic regulator.
//!
//! Every value function, gradient and equilibrium reference is computed
//! exactly (linear solves, Lyapunov and Riccati iterations), so the
//! convergence guarantees of the implemented update rules can be checked
//! numerically without sampling noise.

pub mod error;
pub mod lqr;
pub mod markov_game;
pub mod matrix_game;
pub mod mdp;
pub mod numeric;
pub mod pg;
pub mod random;

pub use error::{Error, Result};
pub use numeric::{Distribution, Mat, Vector};
