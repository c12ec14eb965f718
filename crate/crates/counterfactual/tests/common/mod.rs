//! Shared fixtures: a two-factor chain graph, small model profiles, and
//! deterministic random arrays.

#![allow(dead_code)]

use cda_model::{CausalDiffAe, ModelConfig};
use cda_scm::CausalGraph;
use cda_tensor::nn::Params;
use cda_tensor::rng::{derive_rng, next_standard_normal};
use cda_tensor::Scalar;
use ndarray::{Array2, ArrayD, Axis, IxDyn};

/// Two factors with a single edge 0 -> 1: factor 0 is a root, factor 1 a sink.
pub fn chain_graph() -> CausalGraph {
    let mut a = Array2::<f64>::zeros((2, 2));
    a[[0, 1]] = 1.0;
    CausalGraph::new(a, vec!["thickness".into(), "intensity".into()]).unwrap()
}

/// Smallest config that still exercises every module.
pub fn tiny_cfg() -> ModelConfig {
    ModelConfig {
        n_factors: 2,
        d_z: 2,
        channels: 1,
        resolution: 8,
        encoder_channels: vec![8],
        encoder_hidden: 16,
        base_channels: 8,
        channel_mults: vec![1],
        emb_dim: 8,
        prior_hidden: 4,
        sigma2_min: 1e-4,
        schedule: "linear".into(),
        t_count: 50,
    }
}

/// Slightly deeper profile with a real down/up level, for training smoke runs.
pub fn smoke_cfg() -> ModelConfig {
    ModelConfig {
        n_factors: 2,
        d_z: 2,
        channels: 1,
        resolution: 8,
        encoder_channels: vec![8, 16],
        encoder_hidden: 32,
        base_channels: 8,
        channel_mults: vec![1, 2],
        emb_dim: 16,
        prior_hidden: 8,
        sigma2_min: 1e-4,
        schedule: "linear".into(),
        t_count: 100,
    }
}

pub fn build<T: Scalar>(cfg: ModelConfig, seed: u64) -> (CausalDiffAe, Params<T>) {
    let mut params = Params::new();
    let mut rng = derive_rng(seed, "init", 0);
    let model = CausalDiffAe::new(cfg, chain_graph(), &mut params, &mut rng).unwrap();
    (model, params)
}

pub fn randn_arr<T: Scalar>(shape: &[usize], seed: u64, label: &str) -> ArrayD<T> {
    let mut rng = derive_rng(seed, label, 0);
    let mut out = ArrayD::zeros(IxDyn(shape));
    for v in out.iter_mut() {
        *v = next_standard_normal::<T>(&mut rng);
    }
    out
}

/// Deterministic pseudo-images bounded to [-1, 1].
pub fn image_batch<T: Scalar>(shape: &[usize], seed: u64) -> ArrayD<T> {
    let raw = randn_arr::<T>(shape, seed, "images");
    raw.mapv(|v| T::of_f64(v.into_f64().tanh()))
}

/// Moves every parameter off its initialisation point. The fresh model's
/// zero-initialised heads make it a degenerate point where the conditioning
/// code has no effect on the denoiser output, which would let guidance tests
/// pass vacuously.
pub fn jitter_params<T: Scalar>(params: &mut Params<T>, seed: u64, scale: f64) {
    let mut rng = derive_rng(seed, "jitter", 0);
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for name in names {
        let id = params.id_of(&name).unwrap();
        for v in params.get_mut(id).iter_mut() {
            *v = *v + next_standard_normal::<T>(&mut rng) * T::of_f64(scale);
        }
    }
}

pub fn arrays_bitwise_equal<T: Scalar>(a: &ArrayD<T>, b: &ArrayD<T>) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(x, y)| x == y)
}

pub fn mse<T: Scalar>(a: &ArrayD<T>, b: &ArrayD<T>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let n = a.len() as f64;
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.into_f64() - y.into_f64();
            d * d
        })
        .sum::<f64>()
        / n
}

/// Columns `[factor * d_z, (factor + 1) * d_z)` of a `[batch, n * d_z]` code.
pub fn code_block<T: Scalar>(code: &ArrayD<T>, factor: usize, d_z: usize) -> ArrayD<T> {
    code.slice_axis(Axis(1), ndarray::Slice::from(factor * d_z..(factor + 1) * d_z))
        .to_owned()
}
