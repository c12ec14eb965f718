//! Anti-causal predictors: one small convolutional regressor per generative
//! factor, trained to read the factor's (normalized) value straight off the
//! rendered image. They are the measurement instruments for intervention
//! effectiveness, so training records a validation MAE and refuses to hand
//! back a predictor that cannot read its factor reliably.

use cda_data::LabeledDataset;
use cda_tensor::nn::{Conv2d, GroupNorm, Linear, Params};
use cda_tensor::rng::derive_rng;
use cda_tensor::nn::Graph;
use cda_tensor::{Adam, Var};
use ndarray::{Array2, ArrayD, Axis, IxDyn};
use rand::Rng;

use crate::EvalError;

/// Width of the normalized label range (labels live in `[-1, 1]`).
pub const NORMALIZED_RANGE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorConfig {
    /// Optimization steps per factor.
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Fraction of the dataset held out for validation (at least one sample).
    pub val_fraction: f64,
    pub seed: u64,
    /// Acceptance bound on validation MAE, as a fraction of the label range.
    pub max_val_mae_frac: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            steps: 800,
            batch: 32,
            lr: 3e-3,
            val_fraction: 0.2,
            seed: 0,
            max_val_mae_frac: 0.10,
        }
    }
}

/// Strided-conv stack down to a ≤4×4 grid, then a two-layer head to a scalar.
pub struct ConvRegressor {
    params: Params<f32>,
    convs: Vec<Conv2d>,
    norms: Vec<GroupNorm>,
    fc1: Linear,
    fc2: Linear,
    flat_width: usize,
    channels: usize,
    resolution: usize,
}

fn norm_groups(ch: usize) -> usize {
    if ch % 8 == 0 {
        8
    } else {
        1
    }
}

impl ConvRegressor {
    pub fn new(channels: usize, resolution: usize, seed: u64) -> Self {
        let mut params = Params::new();
        let mut rng = derive_rng(seed, "anticausal-init", 0);
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let (mut c_in, mut res) = (channels, resolution);
        let mut width = 8usize;
        while res > 4 {
            let name = format!("conv{}", convs.len());
            convs.push(Conv2d::new(&mut params, &name, c_in, width, 3, 2, 1, &mut rng));
            norms.push(GroupNorm::new(&mut params, &format!("norm{}", norms.len()), width, norm_groups(width)));
            c_in = width;
            width = (width * 2).min(32);
            res = (res - 1) / 2 + 1;
        }
        let flat_width = c_in * res * res;
        let fc1 = Linear::new(&mut params, "fc1", flat_width, 32, &mut rng);
        let fc2 = Linear::new(&mut params, "fc2", 32, 1, &mut rng);
        ConvRegressor { params, convs, norms, fc1, fc2, flat_width, channels, resolution }
    }

    fn forward(&self, g: &mut Graph<'_, f32>, x: Var) -> Var {
        let mut h = x;
        for (conv, norm) in self.convs.iter().zip(&self.norms) {
            h = conv.forward(g, h);
            h = norm.forward(g, h);
            h = g.silu(h);
        }
        let b = g.shape(h)[0];
        let flat = g.reshape(h, &[b, self.flat_width]);
        let hid = self.fc1.forward(g, flat);
        let hid = g.silu(hid);
        self.fc2.forward(g, hid)
    }

    /// Predictions for a `[batch, channels, res, res]` image batch.
    pub fn predict(&self, images: &ArrayD<f32>) -> Result<Vec<f64>, EvalError> {
        let shape = images.shape();
        if shape.len() != 4 || shape[1] != self.channels || shape[2] != self.resolution || shape[3] != self.resolution {
            return Err(EvalError::Shape(format!(
                "expected [batch, {}, {}, {}] images, got {shape:?}",
                self.channels, self.resolution, self.resolution
            )));
        }
        let mut out = Vec::with_capacity(shape[0]);
        for chunk_start in (0..shape[0]).step_by(64) {
            let chunk_end = (chunk_start + 64).min(shape[0]);
            let chunk = images
                .slice_axis(Axis(0), ndarray::Slice::from(chunk_start..chunk_end))
                .to_owned();
            let mut g = Graph::new(&self.params);
            let x = g.input(chunk);
            let pred = self.forward(&mut g, x);
            out.extend(g.value(pred).iter().map(|&v| v as f64));
        }
        Ok(out)
    }
}

/// The trained predictors plus the bookkeeping that certifies them.
pub struct PredictorSet {
    regressors: Vec<ConvRegressor>,
    factor_names: Vec<String>,
    val_mae: Vec<f64>,
    n_train: usize,
    n_total: usize,
}

impl PredictorSet {
    pub fn n_factors(&self) -> usize {
        self.regressors.len()
    }

    pub fn factor_names(&self) -> &[String] {
        &self.factor_names
    }

    /// Validation MAE per factor, in normalized label units.
    pub fn val_mae(&self) -> &[f64] {
        &self.val_mae
    }

    /// Rows used for training: `[0, n_train)`.
    pub fn train_indices(&self) -> std::ops::Range<usize> {
        0..self.n_train
    }

    /// Rows held out for validation: `[n_train, n_total)`.
    pub fn val_indices(&self) -> std::ops::Range<usize> {
        self.n_train..self.n_total
    }

    /// All factors' predictions for an image batch, `[batch, n_factors]`,
    /// in normalized label units. Pure forward pass — no randomness.
    pub fn predict(&self, images: &ArrayD<f32>) -> Result<Array2<f64>, EvalError> {
        let b = images.shape()[0];
        let mut out = Array2::<f64>::zeros((b, self.regressors.len()));
        for (j, reg) in self.regressors.iter().enumerate() {
            let col = reg.predict(images)?;
            for (i, v) in col.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        Ok(out)
    }
}

/// Trains one regressor per factor on the leading `1 - val_fraction` of the
/// dataset (rows are i.i.d. by construction) and validates on the disjoint
/// tail. Fails with [`EvalError::PredictorQuality`] if any factor's
/// validation MAE exceeds `max_val_mae_frac` of the label range.
pub fn train_anticausal_predictors(
    ds: &LabeledDataset,
    cfg: &PredictorConfig,
) -> Result<PredictorSet, EvalError> {
    let n = ds.len();
    if !(0.0..1.0).contains(&cfg.val_fraction) || cfg.val_fraction <= 0.0 {
        return Err(EvalError::DegenerateData(format!(
            "val_fraction must be in (0, 1), got {}",
            cfg.val_fraction
        )));
    }
    let n_val = ((cfg.val_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
    let n_train = n - n_val;
    if n_train < cfg.batch {
        return Err(EvalError::DegenerateData(format!(
            "{n_train} training rows cannot fill a batch of {}",
            cfg.batch
        )));
    }
    let k = ds.n_factors();

    let mut regressors = Vec::with_capacity(k);
    let mut val_mae = Vec::with_capacity(k);
    for j in 0..k {
        let name = ds.specs()[j].name().to_string();
        let mut reg = ConvRegressor::new(
            ds.channels(),
            ds.resolution(),
            cfg.seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        train_one(&mut reg, ds, j, n_train, cfg)?;
        let mae = validation_mae(&reg, ds, j, n_train)?;
        let allowed = cfg.max_val_mae_frac * NORMALIZED_RANGE;
        if !mae.is_finite() || mae > allowed {
            return Err(EvalError::PredictorQuality { factor: name, val_mae: mae, allowed });
        }
        regressors.push(reg);
        val_mae.push(mae);
    }
    Ok(PredictorSet {
        regressors,
        factor_names: ds.specs().iter().map(|s| s.name().to_string()).collect(),
        val_mae,
        n_train,
        n_total: n,
    })
}

fn train_one(
    reg: &mut ConvRegressor,
    ds: &LabeledDataset,
    factor: usize,
    n_train: usize,
    cfg: &PredictorConfig,
) -> Result<(), EvalError> {
    let mut opt = Adam::new(&reg.params, cfg.lr, None);
    let labels = ds.labels_norm();
    let stream = format!("anticausal/{}", ds.specs()[factor].name());
    for step in 0..cfg.steps {
        let mut rng = derive_rng(cfg.seed, &stream, step as u64);
        let idx: Vec<usize> = (0..cfg.batch).map(|_| rng.gen_range(0..n_train)).collect();

        let shape = ds.images().shape();
        let mut x = ArrayD::<f32>::zeros(IxDyn(&[cfg.batch, shape[1], shape[2], shape[3]]));
        let mut y = Array2::<f32>::zeros((cfg.batch, 1));
        for (row, &i) in idx.iter().enumerate() {
            x.index_axis_mut(Axis(0), row).assign(&ds.image(i));
            y[[row, 0]] = labels[[i, factor]] as f32;
        }

        let grads = {
            let g = &mut Graph::new(&reg.params);
            let xv = g.input(x);
            let yv = g.input(y.into_dyn());
            let pred = reg.forward(g, xv);
            let loss = g.mse(pred, yv);
            let loss_val: f32 = g.scalar_value(loss);
            if !loss_val.is_finite() {
                return Err(EvalError::NonFinite(format!(
                    "loss for factor {factor} became non-finite at step {step}"
                )));
            }
            g.param_grads(loss)
        };
        opt.step(&mut reg.params, &grads);
    }
    Ok(())
}

fn validation_mae(
    reg: &ConvRegressor,
    ds: &LabeledDataset,
    factor: usize,
    n_train: usize,
) -> Result<f64, EvalError> {
    let images = ds
        .images()
        .slice_axis(Axis(0), ndarray::Slice::from(n_train..ds.len()))
        .to_owned();
    let pred = reg.predict(&images)?;
    let labels = ds.labels_norm();
    let mae = pred
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - labels[[n_train + i, factor]]).abs())
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mae)
}
