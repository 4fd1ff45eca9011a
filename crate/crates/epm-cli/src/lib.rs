//! Command line front end for the `epm-core` solver.
//!
//! The library half exists so integration tests can drive runs without
//! spawning the binary: flag parsing ([`args`]), problem files
//! ([`problem_file`]), artifact serialization ([`report`]), and run
//! orchestration ([`runner`]).

pub mod args;
pub mod error;
pub mod problem_file;
pub mod report;
pub mod runner;

pub use args::{Cli, ProblemSource, RunManifest, SolverKind};
pub use error::CliError;
pub use problem_file::{load_problem, ProblemFile};
pub use runner::{run, RunOutcome};
