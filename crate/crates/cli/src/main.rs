//! `periop` — batch pipeline for perioperative risk prediction.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 modeling error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use periop_cli::{effective_config, Overrides, Pipeline, ThresholdPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ThresholdPolicyArg {
    /// Youden's J on the validation scores.
    Validation,
    /// Youden's J on out-of-fold training predictions.
    TrainOof,
}

impl From<ThresholdPolicyArg> for ThresholdPolicy {
    fn from(a: ThresholdPolicyArg) -> Self {
        match a {
            ThresholdPolicyArg::Validation => ThresholdPolicy::Validation,
            ThresholdPolicyArg::TrainOof => ThresholdPolicy::TrainOof,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "periop",
    version,
    about = "Perioperative risk prediction pipeline: synthetic data, cohort assembly, \
             outcome phenotyping, gradient-boosted models, SHAP explanations and reports"
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated outcome subset (icu,mv,aki,mortality).
    #[arg(long, global = true, value_delimiter = ',')]
    outcomes: Option<Vec<String>>,

    /// Make the doctor-id model the primary model in all reports.
    #[arg(long, global = true)]
    include_doctor_id: bool,

    /// Operating-threshold policy for evaluation.
    #[arg(long, global = true, value_enum)]
    threshold_policy: Option<ThresholdPolicyArg>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic PCORnet-style tables from `[synth]`.
    Synth,
    /// Load the CSV tables, apply exclusions, assemble the cohort.
    Ingest,
    /// Phenotype the four postoperative outcomes.
    Label,
    /// Engineer the feature vectors.
    Featurize,
    /// Fit target encoders and boosted ensembles (both doctor-id variants).
    Train,
    /// Score the validation split: metrics, subgroups, cohort table.
    Evaluate,
    /// TreeSHAP feature attributions for the validation split.
    Explain,
    /// Doctor-id sensitivity comparison and the human-readable summary.
    Report,
    /// Run every stage in order.
    RunAll,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();

    let overrides = Overrides {
        seed: cli.seed,
        outcomes: cli.outcomes.clone(),
        include_doctor_id: cli.include_doctor_id,
        threshold_policy: cli.threshold_policy.map(Into::into),
    };

    let cfg = match effective_config(cli.config.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };

    let mut pipeline = Pipeline::new(cfg);
    let result = match cli.cmd {
        Cmd::Synth => pipeline.run_synth(),
        Cmd::Ingest => pipeline.run_ingest(),
        Cmd::Label => pipeline.run_label(),
        Cmd::Featurize => pipeline.run_featurize(),
        Cmd::Train => pipeline.run_train(),
        Cmd::Evaluate => pipeline.run_evaluate(),
        Cmd::Explain => pipeline.run_explain(),
        Cmd::Report => pipeline.run_report(),
        Cmd::RunAll => pipeline.run_all(),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
