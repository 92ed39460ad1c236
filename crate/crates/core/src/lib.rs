//! Batch greedy, distributed/stochastic batch greedy, and MM (modular-bound)
//! heuristics for cardinality-constrained maximization of monotone set
//! functions, specialized to mutual-information Bayesian experimental design
//! for linear-Gaussian models, with brute-force oracles that verify the
//! approximation guarantees at desk scale.

pub mod cli;
pub mod error;
pub mod greedy;
pub mod linalg;
pub mod mm;
pub mod oed;
pub mod problems;
pub mod setfn;

pub use error::{Error, Result};
