//! Configuration, orchestration and output for `wflow` experiment runs.

pub mod config;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod manifest;
pub mod output;
pub mod plot;

pub use config::RunConfig;
pub use error::CliError;
pub use experiments::{run, RunOptions};
pub use manifest::RunManifest;
