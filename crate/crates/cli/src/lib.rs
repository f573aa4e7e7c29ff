//! Config-driven pipelines around `steklov-core`: one JSON config in, CSV,
//! JSON and VTK artifacts out.

pub mod config;
pub mod converge;
pub mod expr;
pub mod output;
pub mod run;

pub use config::RunConfig;
pub use run::{run, RunError, RunOptions, RunSummary};
