//! Exact distributions, simulation and limit constants for the number of
//! runs in a randomly filled binary string, for general pattern functionals
//! of such strings, and for the priority queue and lazy hashing occupancy
//! processes.

pub mod asymptotics;
pub mod combinatorics;
pub mod error;
pub mod evolve;
pub mod pattern;
pub mod poly;
pub mod rng;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
