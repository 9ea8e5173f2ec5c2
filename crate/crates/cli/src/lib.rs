//! Command-line harness: network ingestion, code search, lifting, Gaussian
//! simulation and bound verification, with every artifact written to disk.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_bounds, cmd_pipeline, cmd_quantize, read_network, PipelineOutcome};
pub use config::{config_hash, ExperimentConfig, MethodName, Seeds, CONFIG_FORMAT};
pub use error::CliError;
