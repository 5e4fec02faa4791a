//! Collision-model simulation of open quantum systems.
//!
//! The crate builds Markovian, Lindblad-approximating and non-Markovian collision maps out of
//! Trotter, qDRIFT and single-ancilla LCU Hamiltonian simulation, estimates observables with
//! the randomized protocols, and checks every result against dense oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod cli;
pub mod collision;
pub mod config;
pub mod error;
pub mod estimator;
pub mod hamsim;
pub mod linalg;
pub mod models;
pub mod oracles;
pub mod pauli;
pub mod random;
pub mod state;
pub mod validation;

pub use error::{Error, Result};
