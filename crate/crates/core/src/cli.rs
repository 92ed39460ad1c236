//! Experiment harness: configuration, batch-size sweeps across random
//! instances, heuristic comparison, guarantee verification, and CSV/JSON
//! reporting.

pub mod config;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, Heuristic, ProblemSpec};
pub use sweep::{run_experiment, SweepOutput};
pub use verify::{verify_guarantees, VerifyReport};
