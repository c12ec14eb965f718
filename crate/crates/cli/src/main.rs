//! `cda` — train, probe, and evaluate causal diffusion autoencoders on the
//! synthetic causal-image datasets.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use cda_cli::{
    cmd_evaluate, cmd_generate, cmd_make_data, cmd_plot, cmd_train, parse_do_flag, parse_metrics,
    parse_sweep_flag, CliError, EvalOptions, ExperimentConfig, GenerateMode, LatentSource,
};

#[derive(Parser)]
#[command(
    name = "cda",
    about = "Causal diffusion autoencoder experiments",
    version
)]
struct Cli {
    /// Output root for datasets, runs, and figures (default: $CDA_OUT or ./runs).
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in profile to start from when no config file is given.
    #[arg(long, default_value = "desk")]
    profile: String,
    /// Dataset for the built-in profile: morphomnist, pendulum, circuit-lite.
    #[arg(long)]
    dataset: Option<String>,
    /// Override one config key, e.g. --set train.iterations=100 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, &self.dataset) {
            (Some(path), _) => ExperimentConfig::load(path, &self.sets),
            (None, Some(ds)) => {
                let name = cda_data::DatasetName::from_str(ds)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let base = ExperimentConfig::profile(&self.profile, name)?;
                ExperimentConfig::from_toml(&base.to_toml(), &self.sets)
            }
            (None, None) => Err(CliError::Config(
                "pass --config FILE or --dataset NAME".into(),
            )),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset a config describes (no-op if it already exists).
    MakeData {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train (or resume) a run.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Run name (directory under the output root).
        #[arg(long)]
        run: String,
        /// Continue a run that already has a checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Generate a counterfactual image grid from a trained run.
    GenerateCf {
        /// Run directory (or run name under the output root).
        #[arg(long)]
        run: String,
        /// Intervene on a factor, raw units: --do angle=10 (repeatable).
        #[arg(long = "do", value_name = "FACTOR=VALUE")]
        dos: Vec<String>,
        /// Sweep one factor: --sweep angle=-40:40:5.
        #[arg(long, value_name = "FACTOR=LO:HI:STEPS", conflicts_with = "dos")]
        sweep: Option<String>,
        /// Guidance weight override in [0, 1].
        #[arg(long)]
        omega: Option<f64>,
        /// Dataset sample to start from.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Output name (under the run's grids/ directory).
        #[arg(long)]
        out: Option<String>,
    },
    /// Score a trained run and write a results file.
    Evaluate {
        #[arg(long)]
        run: String,
        /// Comma-separated: dci, effectiveness, omega-effect.
        #[arg(long)]
        metrics: String,
        /// Held-out test-set size.
        #[arg(long, default_value_t = 256)]
        test_n: usize,
        /// Counterfactual samples per intervened factor.
        #[arg(long, default_value_t = 32)]
        cf_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training steps for the anti-causal predictors.
        #[arg(long, default_value_t = 500)]
        predictor_steps: usize,
        /// Results file tag: writes results-<tag>.txt into the run.
        #[arg(long, default_value = "eval")]
        tag: String,
    },
    /// Render figures from results files.
    Plot {
        /// Results files to plot.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Where to write the figures.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn resolve_run(root: &std::path::Path, run: &str) -> PathBuf {
    let as_path = PathBuf::from(run);
    if as_path.is_dir() {
        as_path
    } else {
        root.join(run)
    }
}

fn real_main() -> Result<(), CliError> {
    let cli = Cli::parse();
    let root = cli.root.unwrap_or_else(cda_cli::output_root);
    match cli.command {
        Command::MakeData { config } => {
            let cfg = config.load()?;
            let (path, built) = cmd_make_data(&cfg, &root)?;
            println!(
                "{} {}",
                if built { "built" } else { "exists" },
                path.display()
            );
        }
        Command::Train { config, run, resume } => {
            let cfg = config.load()?;
            let ckpt = cmd_train(&cfg, &root, &run, resume)?;
            println!("checkpoint {}", ckpt.display());
        }
        Command::GenerateCf { run, dos, sweep, omega, index, out } => {
            let mode = match (&sweep, dos.is_empty()) {
                (Some(s), _) => parse_sweep_flag(s)?,
                (None, false) => GenerateMode::Do(
                    dos.iter()
                        .map(|d| parse_do_flag(d))
                        .collect::<Result<_, _>>()?,
                ),
                (None, true) => {
                    return Err(CliError::Config(
                        "pass at least one --do FACTOR=VALUE, or --sweep".into(),
                    ))
                }
            };
            let run_dir = resolve_run(&root, &run);
            let report = cmd_generate(&root, &run_dir, &mode, index, omega, out.as_deref())?;
            println!("grid {}", report.png.display());
            println!("sidecar {}", report.sidecar.display());
        }
        Command::Evaluate {
            run,
            metrics,
            test_n,
            cf_samples,
            seed,
            predictor_steps,
            tag,
        } => {
            let opts = EvalOptions {
                metrics: parse_metrics(&metrics)?,
                test_n,
                cf_samples,
                seed,
                predictor_steps,
                latents: LatentSource::Encoder,
                ..Default::default()
            };
            let run_dir = resolve_run(&root, &run);
            let path = cmd_evaluate(&root, &run_dir, &opts, &tag)?;
            println!("results {}", path.display());
        }
        Command::Plot { results, out_dir } => {
            for path in cmd_plot(&results, &out_dir)? {
                println!("figure {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
