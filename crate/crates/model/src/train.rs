//! One optimisation step, start to finish.
//!
//! Draws the step's randomness from a stream derived from (seed, step) — not
//! from a running generator — so an interrupted run resumed from a checkpoint
//! replays the identical noise and stays bit-identical to an uninterrupted
//! one. A step whose loss or gradients go non-finite is rejected before the
//! optimiser touches anything, leaving parameters and moments unchanged.

use cda_diffusion::NoiseSchedule;
use cda_tensor::nn::{Graph, Params};
use cda_tensor::rng::{derive_rng, next_standard_normal};
use cda_tensor::{Adam, Scalar};
use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{gamma_at, TrainConfig};
use crate::loss::{gaussian_nll_rows, kl_unit_gaussian_rows, masked_batch_mean};
use crate::model::CausalDiffAe;
use crate::ModelError;

/// One minibatch: images, normalized labels (rows for unlabeled samples are
/// ignored), and the per-sample supervision mask (1 = labeled).
pub struct TrainBatch<T: Scalar> {
    pub x0: ArrayD<T>,
    pub labels: Array2<T>,
    pub mask: Array1<T>,
}

impl<T: Scalar> TrainBatch<T> {
    fn validate(&self, model: &CausalDiffAe) -> Result<usize, ModelError> {
        let cfg = model.cfg();
        let shape = self.x0.shape();
        if shape.len() != 4 || shape[1] != cfg.channels || shape[2] != cfg.resolution || shape[3] != cfg.resolution {
            return Err(ModelError::Shape(format!(
                "batch images must be [B, {}, {}, {}], got {:?}",
                cfg.channels, cfg.resolution, cfg.resolution, shape
            )));
        }
        let batch = shape[0];
        if batch == 0 {
            return Err(ModelError::Shape("batch is empty".into()));
        }
        if self.labels.nrows() != batch || self.labels.ncols() != cfg.n_factors {
            return Err(ModelError::Shape(format!(
                "labels must be [{}, {}], got [{}, {}]",
                batch,
                cfg.n_factors,
                self.labels.nrows(),
                self.labels.ncols()
            )));
        }
        if self.mask.len() != batch {
            return Err(ModelError::Shape(format!(
                "mask must have {} entries, got {}",
                batch,
                self.mask.len()
            )));
        }
        Ok(batch)
    }
}

/// What one step did, for logging.
#[derive(Debug, Clone, Copy)]
pub struct StepStats {
    pub loss: f64,
    pub denoise: f64,
    pub regularizer: f64,
    pub gamma: f64,
    pub grad_norm: f64,
}

/// The randomness stream for optimisation step `step` under root `seed`.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    derive_rng(seed, "train", step)
}

fn randn_array<T: Scalar>(shape: &[usize], rng: &mut ChaCha8Rng) -> ArrayD<T> {
    let mut out = ArrayD::zeros(IxDyn(shape));
    for v in out.iter_mut() {
        *v = next_standard_normal::<T>(rng);
    }
    out
}

/// Runs one training step: corrupt, denoise, regularize, update.
///
/// Draw order within the step's stream is frozen (timesteps, then the noise
/// code's draw, then the image noise); changing it would silently change
/// every seeded run.
pub fn train_step<T: Scalar>(
    model: &CausalDiffAe,
    params: &mut Params<T>,
    opt: &mut Adam<T>,
    batch: &TrainBatch<T>,
    step: u64,
    seed: u64,
    tc: &TrainConfig,
    schedule: &NoiseSchedule,
) -> Result<StepStats, ModelError> {
    let b = batch.validate(model)?;
    let cfg = model.cfg();
    let k = cfg.code_width();
    let mut rng = step_rng(seed, step);

    let t_batch: Vec<usize> = (0..b).map(|_| rng.gen_range(0..schedule.t_count())).collect();
    let eps_u = randn_array::<T>(&[b, k], &mut rng);
    let eps_x = randn_array::<T>(batch.x0.shape(), &mut rng);

    // Per-sample corruption coefficients, computed in f64 off the schedule.
    let mut coef_a = ArrayD::<T>::zeros(IxDyn(&[b, 1, 1, 1]));
    let mut coef_b = ArrayD::<T>::zeros(IxDyn(&[b, 1, 1, 1]));
    for (i, &t) in t_batch.iter().enumerate() {
        let ab = schedule.alpha_bar_at(t as isize)?;
        coef_a[[i, 0, 0, 0]] = T::of_f64(ab.sqrt());
        coef_b[[i, 0, 0, 0]] = T::of_f64((1.0 - ab).sqrt());
    }

    let gamma = gamma_at(tc, step);

    let (stats, grads) = {
        let g = &mut Graph::new(&*params);
        let x0 = g.input(batch.x0.clone());
        let labels = g.input(batch.labels.clone().into_dyn());
        let mask_col = g.input(
            batch
                .mask
                .clone()
                .into_shape_with_order(IxDyn(&[b, 1]))
                .expect("mask reshape"),
        );

        let (mu_u, logvar_u) = model.posterior(g, x0);
        let eps_u_var = g.input(eps_u);
        let u = model.sample_u(g, mu_u, logvar_u, eps_u_var);
        let z = model.latents(g, u)?;
        let cond = model.mix_cond(g, z, mask_col);

        let a = g.input(coef_a);
        let bvar = g.input(coef_b);
        let eps_x_var = g.input(eps_x);
        let sig = g.mul(x0, a);
        let noise = g.mul(eps_x_var, bvar);
        let x_t = g.add(sig, noise);

        let eps_hat = model.noise_estimate(g, x_t, &t_batch, cond);
        let denoise = g.mse(eps_hat, eps_x_var);

        let (prior_mu, prior_var) = model.prior.forward(g, labels);
        let kl_u = kl_unit_gaussian_rows(g, mu_u, logvar_u);
        let nll_z = gaussian_nll_rows(g, z, prior_mu, prior_var);
        let reg_rows = g.add(kl_u, nll_z);
        let regularizer = masked_batch_mean(g, reg_rows, mask_col);

        let weighted = g.scale(regularizer, gamma);
        let loss = g.add(denoise, weighted);

        let loss_val = g.scalar_value(loss).into_f64();
        let denoise_val = g.scalar_value(denoise).into_f64();
        let reg_val = g.scalar_value(regularizer).into_f64();
        if !loss_val.is_finite() {
            return Err(ModelError::NonFinite { step, what: "loss" });
        }

        let grads = g.param_grads(loss);
        if grads
            .iter()
            .flatten()
            .any(|arr| arr.iter().any(|v| !v.into_f64().is_finite()))
        {
            return Err(ModelError::NonFinite { step, what: "gradients" });
        }
        ((loss_val, denoise_val, reg_val), grads)
    };

    let grad_norm = opt.step(params, &grads);
    Ok(StepStats {
        loss: stats.0,
        denoise: stats.1,
        regularizer: stats.2,
        gamma,
        grad_norm,
    })
}
