//! The training loop driver: dataset in, periodic checkpoints and an
//! append-only log out. Single-worker and fully seeded — every random draw
//! comes from a stream keyed by (root seed, purpose, step index), so a resumed
//! run replays the remaining steps bit-identically.

use std::path::{Path, PathBuf};

use cda_data::LabeledDataset;
use cda_model::{
    load_checkpoint, save_checkpoint, train_step, CausalDiffAe, ModelError, TrainBatch,
};
use cda_tensor::nn::Params;
use cda_tensor::rng::derive_rng;
use cda_tensor::Adam;
use ndarray::{Array1, Array2, ArrayD, Axis, IxDyn};
use rand::Rng;

use crate::config::ExperimentConfig;
use crate::data_cmd::ensure_dataset;
use crate::rundir::RunDir;
use crate::CliError;

/// Assembles the minibatch for one step; the index draw has its own stream so
/// it never shifts the draws inside the step itself.
fn make_batch(ds: &LabeledDataset, batch: usize, seed: u64, step: u64) -> TrainBatch<f32> {
    let mut rng = derive_rng(seed, "batch", step);
    let idx: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..ds.len())).collect();
    let shape = ds.images().shape();
    let mut x0 = ArrayD::<f32>::zeros(IxDyn(&[batch, shape[1], shape[2], shape[3]]));
    let labels_all = ds.labels_norm_f32();
    let mut labels = Array2::<f32>::zeros((batch, ds.n_factors()));
    let mut mask = Array1::<f32>::zeros(batch);
    for (row, &i) in idx.iter().enumerate() {
        x0.index_axis_mut(Axis(0), row).assign(&ds.image(i));
        labels.row_mut(row).assign(&labels_all.row(i));
        mask[row] = ds.mask()[i];
    }
    TrainBatch { x0, labels, mask }
}

/// Two configs describe the same run if they differ at most in how long to
/// train and how often to log or checkpoint.
fn same_run(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    let mut a = a.clone();
    let mut b = b.clone();
    a.train.iterations = 0;
    b.train.iterations = 0;
    a.train.checkpoint_every = 0;
    b.train.checkpoint_every = 0;
    a.train.log_every = 0;
    b.train.log_every = 0;
    a == b
}

/// Runs (or resumes) training in `root/<run_name>`, returning the checkpoint
/// path. Resuming requires a config that matches the run's snapshot in
/// everything except iteration count and cadences.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    root: &Path,
    run_name: &str,
    resume: bool,
) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let rd = RunDir::claim(&root.join(run_name))?;
    let ckpt_path = rd.checkpoint_path();

    let snapshot_path = rd.config_path();
    if snapshot_path.exists() {
        if !resume {
            return Err(CliError::Config(format!(
                "{} already holds a run; pass --resume to continue it",
                rd.path().display()
            )));
        }
        let snapshot = ExperimentConfig::load(&snapshot_path, &[])?;
        if !same_run(&snapshot, cfg) {
            return Err(CliError::Config(
                "resume config differs from the run's snapshot beyond \
                 iterations/cadence; a continued run must train the same model"
                    .into(),
            ));
        }
    }
    crate::rundir::write_atomic(&snapshot_path, cfg.to_toml().as_bytes())?;

    let ds = ensure_dataset(cfg, root)?;
    let seed = cfg.train.seed;
    let tc = cfg.train_config();
    let mc = cfg.model_config()?;
    let schedule = mc.noise_schedule().map_err(|e| CliError::Config(e.to_string()))?;

    let (model, mut params, mut opt, start): (CausalDiffAe, Params<f32>, Adam<f32>, u64) =
        if resume && ckpt_path.exists() {
            let ckpt = load_checkpoint::<f32>(&ckpt_path)?;
            if ckpt.model.cfg() != &mc {
                return Err(CliError::Config(
                    "checkpoint architecture differs from the config".into(),
                ));
            }
            (ckpt.model, ckpt.params, ckpt.opt, ckpt.step)
        } else {
            let graph = cda_data::causal_graph(cfg.dataset_name()?);
            let mut params = Params::new();
            let mut init_rng = derive_rng(seed, "init", 0);
            let model = CausalDiffAe::new(mc.clone(), graph, &mut params, &mut init_rng)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let opt = Adam::new(&params, tc.lr, tc.clip_norm);
            (model, params, opt, 0)
        };

    if start >= cfg.train.iterations {
        return Ok(ckpt_path);
    }

    for step in start..cfg.train.iterations {
        let batch = make_batch(&ds, cfg.train.batch, seed, step);
        let stats = match train_step(&model, &mut params, &mut opt, &batch, step, seed, &tc, &schedule)
        {
            Ok(stats) => stats,
            Err(ModelError::NonFinite { step, what }) => {
                rd.append_log(&format!("step={step} event=halt reason=non-finite-{what}"))?;
                return Err(CliError::Numerical { step, what: what.to_string() });
            }
            Err(e) => return Err(e.into()),
        };
        let done = step + 1;
        if done % cfg.train.log_every == 0 || done == cfg.train.iterations {
            rd.append_log(&format!(
                "step={step} loss={:.12e} denoise={:.12e} regularizer={:.12e} gamma={:.6} grad_norm={:.6e}",
                stats.loss, stats.denoise, stats.regularizer, stats.gamma, stats.grad_norm
            ))?;
        }
        if done % cfg.train.checkpoint_every == 0 || done == cfg.train.iterations {
            save_checkpoint(&ckpt_path, &model, &params, &opt, done, seed, &tc)?;
        }
    }
    Ok(ckpt_path)
}

/// The `loss=` series from a run's log, in step order.
pub fn read_loss_series(rd: &RunDir) -> Result<Vec<(u64, f64)>, CliError> {
    let text = std::fs::read_to_string(rd.log_path())?;
    let mut out = Vec::new();
    for line in text.lines() {
        let mut step = None;
        let mut loss = None;
        for field in line.split_whitespace() {
            if let Some(v) = field.strip_prefix("step=") {
                step = v.parse::<u64>().ok();
            }
            if let Some(v) = field.strip_prefix("loss=") {
                loss = v.parse::<f64>().ok();
            }
        }
        if let (Some(s), Some(l)) = (step, loss) {
            out.push((s, l));
        }
    }
    Ok(out)
}
