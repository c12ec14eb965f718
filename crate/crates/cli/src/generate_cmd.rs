//! Counterfactual grid generation: load a frozen checkpoint, intervene on
//! named factors (raw units), and write a one-row image grid plus a sidecar
//! describing every panel.

use std::path::{Path, PathBuf};

use cda_counterfactual::{
    counterfactual_sweep, generate_counterfactual, AbductionMode, CounterfactualConfig,
    InterventionSpec, NoiseInitMode,
};
use cda_data::LabeledDataset;
use cda_model::{load_checkpoint, Checkpoint};
use ndarray::{ArrayD, Axis};

use crate::config::{ExperimentConfig, SampleBlock};
use crate::data_cmd::ensure_dataset;
use crate::grid::{write_grid_png, GridSidecar};
use crate::rundir::RunDir;
use crate::CliError;

/// What to generate: one joint intervention, or a sweep over one factor.
#[derive(Debug, Clone, PartialEq)]
pub enum GenerateMode {
    /// `(factor name, raw value)` pairs applied jointly.
    Do(Vec<(String, f64)>),
    /// One factor swept over `steps` evenly spaced raw values in `[lo, hi]`.
    Sweep { factor: String, lo: f64, hi: f64, steps: usize },
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub png: PathBuf,
    pub sidecar: PathBuf,
}

/// Parses one `--do name=value` flag (value in raw factor units).
pub fn parse_do_flag(s: &str) -> Result<(String, f64), CliError> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--do {s:?} is not name=value")))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("--do {s:?} has a non-numeric value")))?;
    Ok((name.trim().to_string(), value))
}

/// Parses a `--sweep name=lo:hi:steps` flag.
pub fn parse_sweep_flag(s: &str) -> Result<GenerateMode, CliError> {
    let bad = || CliError::Config(format!("--sweep {s:?} is not name=lo:hi:steps"));
    let (name, spec) = s.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if steps == 0 || !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(CliError::Config(format!(
            "--sweep {s:?} needs finite lo <= hi and at least one step"
        )));
    }
    Ok(GenerateMode::Sweep { factor: name.trim().to_string(), lo, hi, steps })
}

/// The factor's column index, or the error that names what is available.
fn factor_index(ds: &LabeledDataset, name: &str) -> Result<usize, CliError> {
    ds.specs()
        .iter()
        .position(|s| s.name() == name)
        .ok_or_else(|| CliError::UnknownFactor {
            name: name.to_string(),
            available: ds.specs().iter().map(|s| s.name().to_string()).collect(),
        })
}

/// Checks a raw value against the factor's range and returns its normalized
/// form.
fn normalize_checked(ds: &LabeledDataset, factor: usize, raw: f64) -> Result<f64, CliError> {
    let spec = &ds.specs()[factor];
    if !raw.is_finite() || raw < spec.lo() || raw > spec.hi() {
        return Err(CliError::Config(format!(
            "value {raw} for factor {} is outside its range [{}, {}]",
            spec.name(),
            spec.lo(),
            spec.hi()
        )));
    }
    Ok(spec.normalize(raw))
}

pub fn counterfactual_config(sample: &SampleBlock) -> CounterfactualConfig {
    CounterfactualConfig {
        abduction: match sample.abduction.as_str() {
            "seeded" => AbductionMode::PosteriorSample { seed: sample.seed },
            _ => AbductionMode::PosteriorMean,
        },
        noise_init: match sample.cf_noise.as_str() {
            "seeded" => NoiseInitMode::QSample { seed: sample.seed },
            _ => NoiseInitMode::DdimEncode,
        },
        sample_steps: sample.ddim_steps,
    }
}

fn panel_of(image: &ArrayD<f32>) -> ArrayD<f32> {
    image.index_axis(Axis(0), 0).to_owned().into_dyn()
}

/// Generates a grid for `mode` from sample `index` of the run's dataset.
/// Panels are ordered: factual, reconstruction, then the counterfactuals.
pub fn cmd_generate(
    root: &Path,
    run: &Path,
    mode: &GenerateMode,
    index: usize,
    omega: Option<f64>,
    out_name: Option<&str>,
) -> Result<GenerateReport, CliError> {
    let rd = RunDir::open(run)?;
    let cfg = ExperimentConfig::load(&rd.config_path(), &[])?;
    let ds = ensure_dataset(&cfg, root)?;
    if index >= ds.len() {
        return Err(CliError::Config(format!(
            "sample index {index} out of range (dataset has {} samples)",
            ds.len()
        )));
    }
    let ckpt: Checkpoint<f32> = load_checkpoint(&rd.checkpoint_path())?;
    let mut sample = cfg.sample.clone();
    if let Some(w) = omega {
        sample.omega = w;
    }
    let cf_cfg = counterfactual_config(&sample);

    let x0 = ds.image(index).to_owned().insert_axis(Axis(0)).into_dyn();
    let recon = generate_counterfactual(
        &ckpt.model,
        &ckpt.params,
        &x0,
        &InterventionSpec::null(sample.omega)?,
        &cf_cfg,
    )?;

    let mut panels = vec![panel_of(&x0), panel_of(&recon.image)];
    let mut labels = vec!["factual".to_string(), "reconstruction".to_string()];
    let mut interventions = vec![String::new(), String::new()];

    let stem = match mode {
        GenerateMode::Do(pairs) => {
            let mut targets = Vec::new();
            let mut tag_parts = Vec::new();
            for (name, raw) in pairs {
                let f = factor_index(&ds, name)?;
                targets.push((f, normalize_checked(&ds, f, *raw)?));
                tag_parts.push(format!("{name}={raw}"));
            }
            let spec = InterventionSpec::new(targets, sample.omega)?;
            let out = generate_counterfactual(&ckpt.model, &ckpt.params, &x0, &spec, &cf_cfg)?;
            panels.push(panel_of(&out.image));
            labels.push(format!("do({})", tag_parts.join(", ")));
            interventions.push(tag_parts.join(", "));
            format!("do-{index}")
        }
        GenerateMode::Sweep { factor, lo, hi, steps } => {
            let f = factor_index(&ds, factor)?;
            let values_raw: Vec<f64> = (0..*steps)
                .map(|k| {
                    if *steps == 1 {
                        *lo
                    } else {
                        lo + (hi - lo) * k as f64 / (*steps as f64 - 1.0)
                    }
                })
                .collect();
            let values_norm = values_raw
                .iter()
                .map(|&r| normalize_checked(&ds, f, r))
                .collect::<Result<Vec<_>, _>>()?;
            let outs = counterfactual_sweep(
                &ckpt.model,
                &ckpt.params,
                &x0,
                f,
                &values_norm,
                sample.omega,
                &cf_cfg,
            )?;
            for (out, raw) in outs.iter().zip(&values_raw) {
                panels.push(panel_of(&out.image));
                labels.push(format!("do({factor}={raw:.4})"));
                interventions.push(format!("{factor}={raw:.4}"));
            }
            format!("sweep-{factor}-{index}")
        }
    };

    let name = out_name.map(str::to_string).unwrap_or(stem);
    let png = rd.grids_dir().join(format!("{name}.png"));
    write_grid_png(&png, &panels)?;
    let sidecar = GridSidecar {
        checkpoint: rd.checkpoint_path().display().to_string(),
        sample_index: index,
        omega: sample.omega,
        ddim_steps: sample.ddim_steps,
        panels: labels,
        interventions,
    }
    .save(&png)?;
    Ok(GenerateReport { png, sidecar })
}
