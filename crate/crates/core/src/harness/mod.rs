//! Configuration, initial conditions, diagnostics, benchmarks and the CLI.

pub mod bench;
pub mod cli;
pub mod config;
pub mod convergence;
pub mod diagnostics;
pub mod ic;
pub mod report;
pub mod verify;

pub use config::RunConfig;
pub use diagnostics::{run, RunSummary};
pub use ic::InitialCondition;
