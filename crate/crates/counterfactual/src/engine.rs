//! The counterfactual pipeline: abduct the exogenous noise from the factual
//! image, replay the causal mechanisms with the requested factors clamped to
//! their target codes, and decode the edited code with the guided sampler
//! from a noise image tied to the factual input.

use cda_diffusion::{ddim_encode_loop, ddim_sample_loop, q_sample, NoiseSchedule, SamplerPlan};
use cda_model::CausalDiffAe;
use cda_tensor::rng::{derive_rng, next_standard_normal};
use cda_tensor::nn::Params;
use cda_tensor::Scalar;
use ndarray::{Array2, ArrayD, Axis, IxDyn};

use crate::guide::GuidedPredictor;
use crate::spec::{AbductionMode, CounterfactualConfig, InterventionSpec, NoiseInitMode};
use crate::CounterfactualError;

/// Everything the pipeline produces, kept around so callers can inspect the
/// intermediate latents as well as the decoded image. All arrays keep the
/// input batch dimension.
#[derive(Debug, Clone)]
pub struct CounterfactualOutcome<T: Scalar> {
    /// Decoded counterfactual image, `[batch, channels, h, w]`.
    pub image: ArrayD<T>,
    /// Abducted exogenous noise, `[batch, code_width]`.
    pub u: ArrayD<T>,
    /// Code obtained by replaying the mechanisms without intervention.
    pub code_factual: ArrayD<T>,
    /// Code after clamping the targeted factor blocks.
    pub code_counterfactual: ArrayD<T>,
    /// Noise image the decode started from, `[batch, channels, h, w]`.
    pub x_terminal: ArrayD<T>,
}

/// The representative latent block for "factor `factor` has value `value`":
/// the mean the alignment head assigns to that value, `[batch, d_z]`, the same
/// row repeated for every batch element. `value` is in normalized label units.
pub fn semantic_to_latent<T: Scalar>(
    model: &CausalDiffAe,
    params: &Params<T>,
    factor: usize,
    value: f64,
    batch: usize,
) -> Result<ArrayD<T>, CounterfactualError> {
    let n = model.cfg().n_factors;
    if factor >= n {
        return Err(CounterfactualError::TargetOutOfRange { index: factor, n_factors: n });
    }
    if batch == 0 {
        return Err(CounterfactualError::Shape("semantic_to_latent needs batch >= 1".into()));
    }
    // The alignment heads are independent per factor, so the other columns of
    // the label row never touch the block we slice out.
    let mut labels = Array2::<T>::zeros((batch, n));
    labels.column_mut(factor).fill(T::of_f64(value));
    let (mu, _var) = model.prior_stats(params, &labels);
    let d_z = model.cfg().d_z;
    let block = mu
        .slice_axis(Axis(1), ndarray::Slice::from(factor * d_z..(factor + 1) * d_z))
        .to_owned();
    Ok(block.into_dyn())
}

/// Recovers the exogenous noise for a clean image batch from the noise
/// posterior: its mean, or one reparameterized sample from a dedicated stream.
pub fn abduct<T: Scalar>(
    model: &CausalDiffAe,
    params: &Params<T>,
    x0: &ArrayD<T>,
    mode: AbductionMode,
) -> ArrayD<T> {
    let (mu, logvar) = model.posterior_stats(params, x0);
    match mode {
        AbductionMode::PosteriorMean => mu,
        AbductionMode::PosteriorSample { seed } => {
            let mut rng = derive_rng(seed, "abduct", 0);
            let mut out = mu;
            out.zip_mut_with(&logvar, |m, &lv| {
                let eps: T = next_standard_normal(&mut rng);
                *m = *m + (lv * T::of_f64(0.5)).exp() * eps;
            });
            out
        }
    }
}

/// Shared, intervention-independent part of the pipeline. Factored out so a
/// sweep over target values can reuse one abduction and one terminal-noise
/// image, and is guaranteed to produce the same arrays a one-shot call would.
struct Prepared<T: Scalar> {
    u: ArrayD<T>,
    code_factual: ArrayD<T>,
    x_terminal: ArrayD<T>,
    schedule: NoiseSchedule,
    plan: SamplerPlan,
}

fn prepare<T: Scalar>(
    model: &CausalDiffAe,
    params: &Params<T>,
    x0: &ArrayD<T>,
    cfg: &CounterfactualConfig,
) -> Result<Prepared<T>, CounterfactualError> {
    if x0.ndim() != 4 {
        return Err(CounterfactualError::Shape(format!(
            "expected a [batch, channels, h, w] image batch, got shape {:?}",
            x0.shape()
        )));
    }
    let u = abduct(model, params, x0, cfg.abduction);
    let code_factual = model.push_forward(params, &u, &[])?;
    let schedule = model.cfg().noise_schedule()?;
    let plan = SamplerPlan::uniform(schedule.t_count(), cfg.sample_steps)?;
    let x_terminal = match cfg.noise_init {
        NoiseInitMode::DdimEncode => {
            // Invert under the factual code: the noise image then encodes
            // exactly the non-semantic residue of the factual input.
            let mut enc = GuidedPredictor::new(model, params, code_factual.clone(), 1.0);
            ddim_encode_loop(&mut enc, &schedule, &plan, x0.clone())?
        }
        NoiseInitMode::QSample { seed } => {
            let mut rng = derive_rng(seed, "cf-noise", 0);
            let mut eps = ArrayD::<T>::zeros(IxDyn(x0.shape()));
            for v in eps.iter_mut() {
                *v = next_standard_normal(&mut rng);
            }
            q_sample(x0, schedule.t_count() - 1, &eps, &schedule)?
        }
    };
    Ok(Prepared { u, code_factual, x_terminal, schedule, plan })
}

fn decode<T: Scalar>(
    model: &CausalDiffAe,
    params: &Params<T>,
    prepared: &Prepared<T>,
    spec: &InterventionSpec,
) -> Result<CounterfactualOutcome<T>, CounterfactualError> {
    let batch = prepared.x_terminal.shape()[0];
    let assignments: Vec<(usize, ArrayD<T>)> = spec
        .targets()
        .iter()
        .map(|&(factor, value)| {
            semantic_to_latent(model, params, factor, value, batch).map(|block| (factor, block))
        })
        .collect::<Result<_, _>>()?;
    let code_counterfactual = model.push_forward(params, &prepared.u, &assignments)?;
    let mut dec =
        GuidedPredictor::new(model, params, code_counterfactual.clone(), spec.omega());
    let image = ddim_sample_loop(
        &mut dec,
        &prepared.schedule,
        &prepared.plan,
        prepared.x_terminal.clone(),
    )?;
    Ok(CounterfactualOutcome {
        image,
        u: prepared.u.clone(),
        code_factual: prepared.code_factual.clone(),
        code_counterfactual,
        x_terminal: prepared.x_terminal.clone(),
    })
}

/// Runs the full pipeline for one intervention spec:
///
/// 1. abduct `u` from the factual batch,
/// 2. replay the mechanisms with the targeted factors clamped to the codes
///    their alignment heads assign to the requested values (descendants of a
///    clamped factor see the clamped code; everything else keeps its factual
///    block),
/// 3. produce a terminal noise image from the factual input,
/// 4. decode it with the guided sampler conditioned on the edited code.
pub fn generate_counterfactual<T: Scalar>(
    model: &CausalDiffAe,
    params: &Params<T>,
    x0: &ArrayD<T>,
    spec: &InterventionSpec,
    cfg: &CounterfactualConfig,
) -> Result<CounterfactualOutcome<T>, CounterfactualError> {
    spec.validate_for(model.cfg().n_factors)?;
    let prepared = prepare(model, params, x0, cfg)?;
    decode(model, params, &prepared, spec)
}

/// One counterfactual per value in `values`, all setting the same `factor`,
/// sharing a single abduction and terminal-noise image. Each outcome is
/// exactly what [`generate_counterfactual`] would return for the same
/// single-target spec.
pub fn counterfactual_sweep<T: Scalar>(
    model: &CausalDiffAe,
    params: &Params<T>,
    x0: &ArrayD<T>,
    factor: usize,
    values: &[f64],
    omega: f64,
    cfg: &CounterfactualConfig,
) -> Result<Vec<CounterfactualOutcome<T>>, CounterfactualError> {
    let specs: Vec<InterventionSpec> = values
        .iter()
        .map(|&v| InterventionSpec::new(vec![(factor, v)], omega))
        .collect::<Result<_, _>>()?;
    for spec in &specs {
        spec.validate_for(model.cfg().n_factors)?;
    }
    let prepared = prepare(model, params, x0, cfg)?;
    specs.iter().map(|spec| decode(model, params, &prepared, spec)).collect()
}
