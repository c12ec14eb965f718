//! Experiment orchestration: dataset materialization, seeded training with
//! checkpoints and logs, counterfactual grid generation, evaluation, and
//! figure emission. The `cda` binary is a thin argument-parsing layer over
//! the functions exported here.

pub mod config;
pub mod data_cmd;
pub mod evaluate_cmd;
pub mod generate_cmd;
pub mod grid;
pub mod plot_cmd;
pub mod results;
pub mod rundir;
pub mod svg;
pub mod train_cmd;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use data_cmd::{cmd_make_data, ensure_dataset};
pub use evaluate_cmd::{cmd_evaluate, encode_latents, parse_metrics, test_dataset, EvalOptions, LatentSource, Metric};
pub use generate_cmd::{cmd_generate, parse_do_flag, parse_sweep_flag, GenerateMode, GenerateReport};
pub use plot_cmd::cmd_plot;
pub use results::Results;
pub use rundir::{dataset_path, output_root, RunDir};
pub use train_cmd::{cmd_train, read_loss_series};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("run directory {0} is locked by another run (remove LOCK if it is stale)")]
    RunLocked(PathBuf),
    #[error("unknown factor {name:?}; this dataset has: {}", available.join(", "))]
    UnknownFactor { name: String, available: Vec<String> },
    #[error("non-finite {what} at step {step}; run halted, last checkpoint intact")]
    Numerical { step: u64, what: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Data(#[from] cda_data::DataError),
    #[error(transparent)]
    Model(#[from] cda_model::ModelError),
    #[error(transparent)]
    Counterfactual(#[from] cda_counterfactual::CounterfactualError),
    #[error(transparent)]
    Eval(#[from] cda_eval::EvalError),
}
