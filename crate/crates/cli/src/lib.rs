//! Library surface of the pipeline driver so integration tests can run
//! stages in-process. The binary in `main.rs` is a thin argument-parsing
//! wrapper around [`Pipeline`].

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod table1;

pub use config::{Overrides, PipelineConfig, ThresholdPolicy};
pub use error::CliError;
pub use pipeline::Pipeline;

use std::path::Path;

/// Load the config file (if any), apply flag overrides, validate.
pub fn effective_config(
    path: Option<&Path>,
    overrides: &Overrides,
) -> Result<PipelineConfig, CliError> {
    let mut cfg = PipelineConfig::load(path)?;
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
