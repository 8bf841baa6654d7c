//! Error type for the CLI, carrying the process exit code.
//!
//! Exit code contract:
//!   0 — success
//!   2 — configuration error (bad config file, invalid flag combination)
//!   3 — data error (missing/malformed inputs, missing upstream artifacts,
//!       artifacts produced under a different configuration)
//!   4 — modeling error (training, explanation or evaluation failure)

use periop_core::CoreError;
use periop_eval::EvalError;
use periop_gbdt::GbdtError;
use periop_synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("modeling error: {0}")]
    Modeling(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Modeling(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(msg) => CliError::Config(msg),
            CoreError::BadFraction(f) => {
                CliError::Config(format!("train_fraction must be in (0, 1), got {f}"))
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<GbdtError> for CliError {
    fn from(e: GbdtError) -> Self {
        CliError::Modeling(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Modeling(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(msg) => CliError::Config(format!("synth config: {msg}")),
            SynthError::Calibration { .. } | SynthError::Invariant(_) => {
                CliError::Modeling(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(format!("JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(format!("CSV: {e}"))
    }
}
