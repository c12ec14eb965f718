//! The optimisation loop: determinism, masking semantics, the regularizer
//! ramp, rejection of non-finite steps, and an actual overfitting run.

mod common;

use cda_model::{gamma_at, train_step, StepStats, TrainBatch, TrainConfig};
use cda_tensor::{Adam, Scalar};
use common::*;
use ndarray::{Array1, Array2};

fn batch_of_two<T: Scalar>(mask: [f64; 2]) -> TrainBatch<T> {
    TrainBatch {
        x0: image_batch::<T>(&[2, 1, 8, 8], 101),
        labels: Array2::from_shape_vec((2, 2), vec![0.25, -0.5, 0.75, 0.1])
            .unwrap()
            .mapv(T::of_f64),
        mask: Array1::from_vec(mask.to_vec()).mapv(T::of_f64),
    }
}

fn run_steps<T: Scalar>(
    seed: u64,
    steps: u64,
    tc: &TrainConfig,
    mask: [f64; 2],
) -> (Vec<StepStats>, cda_tensor::nn::Params<T>) {
    let (model, mut params) = build::<T>(smoke_cfg(), seed);
    let schedule = model.cfg().noise_schedule().unwrap();
    let mut opt = Adam::new(&params, tc.lr, tc.clip_norm);
    let batch = batch_of_two::<T>(mask);
    let mut stats = Vec::new();
    for step in 0..steps {
        stats.push(
            train_step(&model, &mut params, &mut opt, &batch, step, seed, tc, &schedule).unwrap(),
        );
    }
    (stats, params)
}

#[test]
fn a_step_updates_parameters_and_reports_finite_stats() {
    let tc = TrainConfig::default();
    let (model, mut params) = build::<f32>(smoke_cfg(), 5);
    let before = clone_params(&params);
    let schedule = model.cfg().noise_schedule().unwrap();
    let mut opt = Adam::new(&params, tc.lr, tc.clip_norm);
    let batch = batch_of_two::<f32>([1.0, 0.0]);

    let s = train_step(&model, &mut params, &mut opt, &batch, 0, 5, &tc, &schedule).unwrap();
    assert!(s.loss.is_finite() && s.denoise.is_finite() && s.regularizer.is_finite());
    assert!(s.grad_norm > 0.0);
    assert!(!params_bitwise_equal(&before, &params), "parameters must move");
    assert_eq!(opt.step_count(), 1);
}

#[test]
fn gamma_ramps_linearly_then_saturates() {
    let tc = TrainConfig { gamma_final: 2.0, gamma_anneal_steps: 100, ..TrainConfig::default() };
    assert_eq!(gamma_at(&tc, 0), 0.0);
    assert!((gamma_at(&tc, 50) - 1.0).abs() < 1e-12);
    assert_eq!(gamma_at(&tc, 100), 2.0);
    assert_eq!(gamma_at(&tc, 10_000), 2.0);
    let flat = TrainConfig { gamma_final: 0.5, gamma_anneal_steps: 0, ..TrainConfig::default() };
    assert_eq!(gamma_at(&flat, 0), 0.5);
}

#[test]
fn zero_gamma_makes_the_loss_exactly_the_denoising_term() {
    let tc = TrainConfig { gamma_final: 0.0, gamma_anneal_steps: 0, ..TrainConfig::default() };
    let (stats, _) = run_steps::<f64>(9, 3, &tc, [1.0, 1.0]);
    for s in &stats {
        assert_eq!(s.loss, s.denoise, "with zero weight the regularizer must not enter at all");
        assert!(s.regularizer > 0.0, "the regularizer is still reported for logging");
    }
}

#[test]
fn fully_unlabeled_batch_has_exactly_zero_regularizer() {
    let tc = TrainConfig { gamma_final: 1.0, gamma_anneal_steps: 0, ..TrainConfig::default() };
    let (stats, _) = run_steps::<f64>(21, 3, &tc, [0.0, 0.0]);
    for s in &stats {
        assert_eq!(s.regularizer, 0.0);
        assert_eq!(s.loss, s.denoise);
    }
}

#[test]
fn identical_seeds_train_bit_identically_and_different_seeds_diverge() {
    let tc = TrainConfig::default();
    let (_, a) = run_steps::<f32>(33, 5, &tc, [1.0, 0.0]);
    let (_, b) = run_steps::<f32>(33, 5, &tc, [1.0, 0.0]);
    let (_, c) = run_steps::<f32>(34, 5, &tc, [1.0, 0.0]);
    assert!(params_bitwise_equal(&a, &b));
    assert!(!params_bitwise_equal(&a, &c));
}

#[test]
fn non_finite_step_is_rejected_with_state_untouched() {
    let tc = TrainConfig::default();
    let (model, mut params) = build::<f32>(smoke_cfg(), 15);
    let schedule = model.cfg().noise_schedule().unwrap();
    let mut opt = Adam::new(&params, tc.lr, tc.clip_norm);
    let batch = batch_of_two::<f32>([1.0, 0.0]);

    // Two clean steps so the optimiser has real momentum state to protect.
    for step in 0..2 {
        train_step(&model, &mut params, &mut opt, &batch, step, 15, &tc, &schedule).unwrap();
    }

    // Poison one output-head bias; the denoiser output, and hence the loss,
    // becomes non-finite.
    let id = params.id_of("unet.out.conv.b").unwrap();
    params.get_mut(id).as_slice_mut().unwrap()[0] = f32::INFINITY;
    let snapshot = clone_params(&params);
    let moments_before: Vec<_> = {
        let (m, v) = opt.moments();
        m.iter().chain(v.iter()).cloned().collect()
    };

    let err = train_step(&model, &mut params, &mut opt, &batch, 2, 15, &tc, &schedule);
    assert!(err.is_err(), "a non-finite loss must be rejected");
    assert!(params_bitwise_equal(&snapshot, &params), "rejected step must not move parameters");
    let (m, v) = opt.moments();
    let moments_after: Vec<_> = m.iter().chain(v.iter()).cloned().collect();
    assert_eq!(moments_before, moments_after, "rejected step must not touch optimiser state");
    assert_eq!(opt.step_count(), 2);
}

#[test]
fn two_hundred_steps_overfit_two_images() {
    let tc = TrainConfig {
        lr: 3e-3,
        clip_norm: Some(1.0),
        gamma_final: 0.1,
        gamma_anneal_steps: 0,
    };
    let (stats, _) = run_steps::<f32>(71, 200, &tc, [1.0, 0.0]);
    let window = |k: usize| -> f64 {
        stats[k * 50..(k + 1) * 50].iter().map(|s| s.loss).sum::<f64>() / 50.0
    };
    let means: Vec<f64> = (0..4).map(window).collect();
    for w in means.windows(2) {
        assert!(
            w[1] < w[0],
            "50-step moving average must fall monotonically, got {means:?}"
        );
    }
    assert!(
        means[3] < 0.6 * means[0],
        "overfitting two images should cut the loss substantially, got {means:?}"
    );
}
