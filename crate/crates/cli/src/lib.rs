//! Configuration, raster I/O and the end-to-end segmentation pipeline
//! behind the `liftseg` binary.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;

pub use config::{validate_config, Diagnostic, RunConfig};
pub use error::CliError;
pub use pipeline::{run_pipeline, RunOptions, RunSummary};
