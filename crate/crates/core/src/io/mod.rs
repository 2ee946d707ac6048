//! Configuration, experiment dispatch and output files.

pub mod config;
pub mod dispatch;
pub mod emit;

pub use config::{parse_config, Experiment, OutputFormat, RunConfig};
pub use dispatch::{dispatch, DispatchReport, ErrorRecord};
