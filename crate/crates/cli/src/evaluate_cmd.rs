//! Evaluation against a frozen checkpoint: disentanglement of the semantic
//! code, per-factor counterfactual effectiveness, and the guidance-weight
//! effect curve. All randomness (test set, intervention draws, predictor
//! training) comes from fixed seeds, so two evaluations of the same run
//! produce identical results files.

use std::path::{Path, PathBuf};

use cda_counterfactual::{generate_counterfactual, InterventionSpec};
use cda_data::{counterfactual_labels, LabeledDataset};
use cda_eval::{
    dci_score, fit_importance_matrix, train_anticausal_predictors, ForestConfig, PredictorConfig,
    PredictorSet,
};
use cda_model::{load_checkpoint, Checkpoint};
use cda_tensor::rng::derive_rng;
use ndarray::{Array2, ArrayD, Axis};
use rand::Rng;

use crate::config::ExperimentConfig;
use crate::data_cmd::ensure_dataset;
use crate::generate_cmd::counterfactual_config;
use crate::results::Results;
use crate::rundir::{dataset_path, RunDir};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Dci,
    Effectiveness,
    OmegaEffect,
}

/// Parses a `--metrics` list like `dci,effectiveness`. An empty list is an
/// error: an evaluation that measures nothing is a mistake, not a no-op.
pub fn parse_metrics(s: &str) -> Result<Vec<Metric>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m = match part {
            "dci" => Metric::Dci,
            "effectiveness" => Metric::Effectiveness,
            "omega-effect" => Metric::OmegaEffect,
            other => {
                return Err(CliError::Parse(format!(
                    "unknown metric {other:?} (expected dci, effectiveness, omega-effect)"
                )))
            }
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Parse("the metrics list is empty".into()));
    }
    Ok(out)
}

/// Where evaluation latents come from: the trained encoder, or an injected
/// matrix (used to validate the metric pipeline against known-perfect codes).
pub enum LatentSource {
    Encoder,
    Planted(Array2<f64>),
}

pub struct EvalOptions {
    pub metrics: Vec<Metric>,
    /// Held-out test-set size (built with the run's settings, fresh seed).
    pub test_n: usize,
    /// Samples per intervened factor for the counterfactual metrics.
    pub cf_samples: usize,
    pub seed: u64,
    /// Training steps for the anti-causal predictors.
    pub predictor_steps: usize,
    /// Guidance weights for the effect curve.
    pub omegas: Vec<f64>,
    pub latents: LatentSource,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            metrics: vec![Metric::Dci, Metric::Effectiveness, Metric::OmegaEffect],
            test_n: 256,
            cf_samples: 32,
            seed: 0,
            predictor_steps: 500,
            omegas: vec![0.2, 0.5, 1.0],
            latents: LatentSource::Encoder,
        }
    }
}

/// The run's held-out test set: same generator settings, fresh seed, labels
/// always visible.
pub fn test_dataset(
    cfg: &ExperimentConfig,
    root: &Path,
    test_n: usize,
) -> Result<LabeledDataset, CliError> {
    let mut bc = cfg.build_config()?;
    bc.n = test_n;
    bc.seed = bc.seed.wrapping_add(1);
    bc.p_unlabeled = 0.0;
    let path = dataset_path(root, &bc);
    if path.exists() {
        return Ok(LabeledDataset::load(&path)?);
    }
    let ds = cda_data::build_dataset(&bc)?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    ds.save(&path)?;
    Ok(ds)
}

/// Posterior-mean codes for every image, `[n, code_width]` in f64.
pub fn encode_latents(ckpt: &Checkpoint<f32>, ds: &LabeledDataset) -> Array2<f64> {
    let width = ckpt.model.cfg().code_width();
    let mut out = Array2::<f64>::zeros((ds.len(), width));
    for start in (0..ds.len()).step_by(64) {
        let end = (start + 64).min(ds.len());
        let chunk = ds
            .images()
            .slice_axis(Axis(0), ndarray::Slice::from(start..end))
            .to_owned();
        let (mu, _) = ckpt.model.posterior_stats(&ckpt.params, &chunk);
        for i in 0..(end - start) {
            for j in 0..width {
                out[[start + i, j]] = mu[[i, j]] as f64;
            }
        }
    }
    out
}

fn predictors_for(
    ckpt_train_ds: &LabeledDataset,
    opts: &EvalOptions,
) -> Result<PredictorSet, CliError> {
    let cfg = PredictorConfig {
        steps: opts.predictor_steps,
        seed: opts.seed,
        ..Default::default()
    };
    Ok(train_anticausal_predictors(ckpt_train_ds, &cfg)?)
}

/// Donor-based intervention draws: the raw target value for each sample is
/// factor `j` of another test sample drawn uniformly, i.e. interventions are
/// distributed exactly as the factor is over the test set.
fn donor_values(test: &LabeledDataset, factor: usize, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_rng(seed, "intervention", factor as u64);
    (0..count)
        .map(|_| test.labels_raw()[[rng.gen_range(0..test.len()), factor]])
        .collect()
}

struct CfCase {
    x0: ArrayD<f32>,
    factual_raw: Vec<f64>,
    target_norm: f64,
    target_raw: f64,
}

fn cf_cases(test: &LabeledDataset, factor: usize, count: usize, seed: u64) -> Vec<CfCase> {
    let values = donor_values(test, factor, count, seed);
    values
        .into_iter()
        .enumerate()
        .map(|(i, target_raw)| {
            let idx = i % test.len();
            CfCase {
                x0: test.image(idx).to_owned().insert_axis(Axis(0)).into_dyn(),
                factual_raw: test.labels_raw().row(idx).to_vec(),
                target_norm: test.specs()[factor].normalize(target_raw),
                target_raw,
            }
        })
        .collect()
}

/// Evaluates `run` and writes `results-<tag>.txt` into it.
pub fn cmd_evaluate(
    root: &Path,
    run: &Path,
    opts: &EvalOptions,
    tag: &str,
) -> Result<PathBuf, CliError> {
    let rd = RunDir::open(run)?;
    let cfg = ExperimentConfig::load(&rd.config_path(), &[])?;
    let name = cfg.dataset_name()?;
    let ckpt: Checkpoint<f32> = load_checkpoint(&rd.checkpoint_path())?;
    let test = test_dataset(&cfg, root, opts.test_n)?;
    let mut results = Results::new();

    let needs_predictors = opts
        .metrics
        .iter()
        .any(|m| matches!(m, Metric::Effectiveness | Metric::OmegaEffect));
    let predictors = if needs_predictors {
        let train_ds = ensure_dataset(&cfg, root)?;
        Some(predictors_for(&train_ds, opts)?)
    } else {
        None
    };

    for metric in &opts.metrics {
        match metric {
            Metric::Dci => {
                let latents = match &opts.latents {
                    LatentSource::Encoder => encode_latents(&ckpt, &test),
                    LatentSource::Planted(l) => l.clone(),
                };
                let d_z = latents.ncols() / name.n_factors();
                let r = fit_importance_matrix(
                    &latents,
                    d_z,
                    test.labels_norm(),
                    &ForestConfig { seed: opts.seed, ..Default::default() },
                )?;
                results.push("dci", dci_score(&r)?);
            }
            Metric::Effectiveness => {
                let preds = predictors.as_ref().expect("trained above");
                let cf_cfg = counterfactual_config(&cfg.sample);
                let specs = test.specs();
                for factor in 0..name.n_factors() {
                    let cases = cf_cases(&test, factor, opts.cf_samples, opts.seed);
                    let mut abs_err = vec![0.0_f64; name.n_factors()];
                    for case in &cases {
                        let spec = InterventionSpec::new(
                            vec![(factor, case.target_norm)],
                            cfg.sample.omega,
                        )?;
                        let out = generate_counterfactual(
                            &ckpt.model,
                            &ckpt.params,
                            &case.x0,
                            &spec,
                            &cf_cfg,
                        )?;
                        let pred = preds.predict(&out.image)?;
                        let truth = counterfactual_labels(
                            name,
                            &case.factual_raw,
                            &[(factor, case.target_raw)],
                        )?;
                        for k in 0..name.n_factors() {
                            abs_err[k] += (pred[[0, k]] - specs[k].normalize(truth[k])).abs();
                        }
                    }
                    for k in 0..name.n_factors() {
                        results.push(
                            format!(
                                "effectiveness.do_{}.{}",
                                specs[factor].name(),
                                specs[k].name()
                            ),
                            abs_err[k] / cases.len() as f64,
                        );
                    }
                }
            }
            Metric::OmegaEffect => {
                let preds = predictors.as_ref().expect("trained above");
                let factor = 0;
                let cases = cf_cases(&test, factor, opts.cf_samples, opts.seed);
                for &omega in &opts.omegas {
                    let cf_cfg = counterfactual_config(&cfg.sample);
                    let mut effect = 0.0_f64;
                    for case in &cases {
                        let spec =
                            InterventionSpec::new(vec![(factor, case.target_norm)], omega)?;
                        let cf = generate_counterfactual(
                            &ckpt.model,
                            &ckpt.params,
                            &case.x0,
                            &spec,
                            &cf_cfg,
                        )?;
                        let recon = generate_counterfactual(
                            &ckpt.model,
                            &ckpt.params,
                            &case.x0,
                            &InterventionSpec::null(omega)?,
                            &cf_cfg,
                        )?;
                        let p_cf = preds.predict(&cf.image)?;
                        let p_rec = preds.predict(&recon.image)?;
                        effect += (p_cf[[0, factor]] - p_rec[[0, factor]]).abs();
                    }
                    results.push(
                        format!(
                            "omega_effect.do_{}.w{omega}",
                            test.specs()[factor].name()
                        ),
                        effect / cases.len() as f64,
                    );
                }
            }
        }
    }

    let path = rd.results_path(tag);
    results.save(&path)?;
    Ok(path)
}
