//! Experiment configuration: one TOML file with four blocks (dataset, model,
//! train, sample), validated strictly — any unknown or misspelled key is
//! rejected before any compute starts.
//!
//! Two built-in profiles exist per dataset: `desk` (small images, short
//! schedules, sized for a single CPU) and `paper` (the full-scale settings:
//! batch 768/128/128, 128 base channels, learning rate 1e-4, 512 latent
//! coordinates, 10K–40K iterations). `desk` is the default everywhere; CI and
//! the test suite never run `paper`.

use std::path::Path;
use std::str::FromStr;

use cda_data::{BuildConfig, DatasetName};
use cda_model::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetBlock,
    pub model: ModelBlock,
    pub train: TrainBlock,
    pub sample: SampleBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetBlock {
    /// "morphomnist", "pendulum", or "circuit-lite".
    pub name: String,
    /// Training-set size.
    pub n: usize,
    pub resolution: usize,
    /// Fraction of training samples whose labels are hidden.
    pub p_unlabeled: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Total width of the semantic code; each factor owns an equal block, so
    /// this must be divisible by the dataset's factor count.
    pub latent_total: usize,
    pub encoder_channels: Vec<usize>,
    pub encoder_hidden: usize,
    pub base_channels: usize,
    pub channel_mults: Vec<usize>,
    pub emb_dim: usize,
    pub prior_hidden: usize,
    /// "linear" or "cosine".
    pub schedule: String,
    /// Diffusion step count T.
    pub t_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainBlock {
    pub batch: usize,
    pub lr: f64,
    /// Total gradient steps (a resumed run continues up to this count).
    pub iterations: u64,
    pub seed: u64,
    pub gamma_final: f64,
    pub gamma_anneal_steps: u64,
    /// Global gradient-norm clip; omit to disable.
    pub clip_norm: Option<f64>,
    /// Write a checkpoint every this many steps (and always at the end).
    pub checkpoint_every: u64,
    /// Append a log record every this many steps.
    pub log_every: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    /// Sampler levels used for both inversion and generation.
    pub ddim_steps: usize,
    /// Terminal-noise source for counterfactuals: "encode" (deterministic
    /// inversion of the factual image) or "seeded" (fresh forward noise).
    pub cf_noise: String,
    /// Abduction mode: "mean" (posterior mean) or "seeded" (posterior draw).
    pub abduction: String,
    /// Guidance weight ω in [0, 1].
    pub omega: f64,
    /// Seed for the "seeded" noise/abduction modes.
    pub seed: u64,
}

impl ExperimentConfig {
    /// The small-profile defaults for one dataset.
    pub fn desk(name: DatasetName) -> Self {
        let (n, resolution, base_channels, iterations, t_count) = match name {
            DatasetName::MorphoMnist => (2000, 16, 16, 400, 200),
            DatasetName::Pendulum => (2000, 32, 24, 500, 200),
            DatasetName::CircuitLite => (2000, 32, 24, 500, 200),
        };
        let schedule = match name {
            DatasetName::CircuitLite => "cosine",
            _ => "linear",
        };
        ExperimentConfig {
            dataset: DatasetBlock {
                name: name.to_string(),
                n,
                resolution,
                p_unlabeled: 0.0,
                seed: 7,
            },
            model: ModelBlock {
                latent_total: 4 * name.n_factors(),
                encoder_channels: vec![16, 32],
                encoder_hidden: 128,
                base_channels,
                channel_mults: vec![1, 2],
                emb_dim: 48,
                prior_hidden: 32,
                schedule: schedule.into(),
                t_count,
            },
            train: TrainBlock {
                batch: 16,
                lr: 3e-3,
                iterations,
                seed: 0,
                gamma_final: 1.0,
                gamma_anneal_steps: 100,
                clip_norm: Some(1.0),
                checkpoint_every: 200,
                log_every: 1,
            },
            sample: SampleBlock {
                ddim_steps: 25,
                cf_noise: "encode".into(),
                abduction: "mean".into(),
                omega: 1.0,
                seed: 0,
            },
        }
    }

    /// The full-scale profile for one dataset.
    pub fn paper(name: DatasetName) -> Self {
        let (n, resolution, batch, mults, t_count, iterations) = match name {
            DatasetName::MorphoMnist => (60_000, 28, 768, vec![1, 2, 2], 1000, 10_000),
            DatasetName::Pendulum => (5_000, 96, 128, vec![1, 2, 4, 8], 1000, 40_000),
            DatasetName::CircuitLite => (50_000, 128, 128, vec![1, 2, 4, 8], 4000, 20_000),
        };
        let schedule = match name {
            DatasetName::CircuitLite => "cosine",
            _ => "linear",
        };
        ExperimentConfig {
            dataset: DatasetBlock {
                name: name.to_string(),
                n,
                resolution,
                p_unlabeled: 0.0,
                seed: 7,
            },
            model: ModelBlock {
                latent_total: 512,
                encoder_channels: vec![32, 64],
                encoder_hidden: 256,
                base_channels: 128,
                channel_mults: mults,
                emb_dim: 128,
                prior_hidden: 64,
                schedule: schedule.into(),
                t_count,
            },
            train: TrainBlock {
                batch,
                lr: 1e-4,
                iterations,
                seed: 0,
                gamma_final: 1.0,
                gamma_anneal_steps: 5000,
                clip_norm: Some(1.0),
                checkpoint_every: 1000,
                log_every: 10,
            },
            sample: SampleBlock {
                ddim_steps: 250,
                cf_noise: "encode".into(),
                abduction: "mean".into(),
                omega: 1.0,
                seed: 0,
            },
        }
    }

    pub fn profile(kind: &str, name: DatasetName) -> Result<Self, CliError> {
        match kind {
            "desk" => Ok(Self::desk(name)),
            "paper" => Ok(Self::paper(name)),
            other => Err(CliError::Config(format!(
                "unknown profile {other:?} (expected \"desk\" or \"paper\")"
            ))),
        }
    }

    /// Reads a config file and applies `--set block.key=value` overrides, in
    /// order, before strict validation.
    pub fn load(path: &Path, sets: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, sets)
    }

    /// Parses config text and applies overrides. Unknown keys anywhere —
    /// file or override — are rejected.
    pub fn from_toml(text: &str, sets: &[String]) -> Result<Self, CliError> {
        let mut value: toml::Value = text
            .parse()
            .map_err(|e| CliError::Config(format!("config is not valid TOML: {e}")))?;
        for set in sets {
            apply_set(&mut value, set)?;
        }
        let cfg: ExperimentConfig = value
            .try_into()
            .map_err(|e| CliError::Config(format!("config schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn dataset_name(&self) -> Result<DatasetName, CliError> {
        DatasetName::from_str(&self.dataset.name)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// The dataset builder settings this config describes.
    pub fn build_config(&self) -> Result<BuildConfig, CliError> {
        let name = self.dataset_name()?;
        Ok(BuildConfig {
            name,
            n: self.dataset.n,
            seed: self.dataset.seed,
            p_unlabeled: self.dataset.p_unlabeled,
            resolution: self.dataset.resolution,
        })
    }

    /// The network architecture this config describes.
    pub fn model_config(&self) -> Result<ModelConfig, CliError> {
        let name = self.dataset_name()?;
        let n_factors = name.n_factors();
        if self.model.latent_total % n_factors != 0 {
            return Err(CliError::Config(format!(
                "latent_total {} is not divisible by the {} factors of {}",
                self.model.latent_total, n_factors, name
            )));
        }
        let mc = ModelConfig {
            n_factors,
            d_z: self.model.latent_total / n_factors,
            channels: name.channels(),
            resolution: self.dataset.resolution,
            encoder_channels: self.model.encoder_channels.clone(),
            encoder_hidden: self.model.encoder_hidden,
            base_channels: self.model.base_channels,
            channel_mults: self.model.channel_mults.clone(),
            emb_dim: self.model.emb_dim,
            prior_hidden: self.model.prior_hidden,
            sigma2_min: 1e-4,
            schedule: self.model.schedule.clone(),
            t_count: self.model.t_count,
        };
        mc.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(mc)
    }

    /// The optimisation settings this config describes.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            clip_norm: self.train.clip_norm,
            gamma_final: self.train.gamma_final,
            gamma_anneal_steps: self.train.gamma_anneal_steps,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        self.dataset_name()?;
        if self.dataset.n == 0 {
            return fail("dataset.n must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.dataset.p_unlabeled) {
            return fail(format!(
                "dataset.p_unlabeled must be in [0, 1], got {}",
                self.dataset.p_unlabeled
            ));
        }
        self.model_config()?;
        if self.train.batch == 0 || self.train.batch > self.dataset.n {
            return fail(format!(
                "train.batch must be in [1, {}], got {}",
                self.dataset.n, self.train.batch
            ));
        }
        if !(self.train.lr.is_finite() && self.train.lr > 0.0) {
            return fail(format!("train.lr must be positive, got {}", self.train.lr));
        }
        if self.train.iterations == 0 {
            return fail("train.iterations must be positive".into());
        }
        if self.train.checkpoint_every == 0 || self.train.log_every == 0 {
            return fail("train.checkpoint_every and train.log_every must be positive".into());
        }
        if !self.train.gamma_final.is_finite() || self.train.gamma_final < 0.0 {
            return fail(format!(
                "train.gamma_final must be non-negative, got {}",
                self.train.gamma_final
            ));
        }
        if self.sample.ddim_steps == 0 || self.sample.ddim_steps > self.model.t_count {
            return fail(format!(
                "sample.ddim_steps must be in [1, {}], got {}",
                self.model.t_count, self.sample.ddim_steps
            ));
        }
        if !(0.0..=1.0).contains(&self.sample.omega) {
            return fail(format!(
                "sample.omega must be in [0, 1], got {}",
                self.sample.omega
            ));
        }
        match self.sample.cf_noise.as_str() {
            "encode" | "seeded" => {}
            other => {
                return fail(format!(
                    "sample.cf_noise must be \"encode\" or \"seeded\", got {other:?}"
                ))
            }
        }
        match self.sample.abduction.as_str() {
            "mean" | "seeded" => {}
            other => {
                return fail(format!(
                    "sample.abduction must be \"mean\" or \"seeded\", got {other:?}"
                ))
            }
        }
        Ok(())
    }
}

/// Applies one `block.key=value` override to a parsed TOML tree. The value is
/// itself parsed as TOML, so numbers, booleans, strings, and arrays all work
/// (`--set model.channel_mults=[1,2]`); bare words fall back to strings.
fn apply_set(root: &mut toml::Value, set: &str) -> Result<(), CliError> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {set:?} is not key=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(CliError::Config(format!("override {set:?} has an empty key")));
    }
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(mut t)) => t.remove("v").expect("key v was just written"),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override path {path:?} crosses a non-table")))?
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("override path {path:?} crosses a non-table")))?;
    table.insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}
