//! Forward corruption, the DDIM update, and the deterministic
//! sampling/encoding loops.

use cda_tensor::Scalar;
use ndarray::ArrayD;

use crate::{DiffusionError, NoiseSchedule};

/// Conditional noise estimator ε(x_t, t). Conditioning (causal latents,
/// guidance weights) is captured by the implementor; the loops only see the
/// noisy image and the timestep. `&mut` admits caching implementors.
pub trait NoisePredictor<T: Scalar> {
    fn predict_noise(&mut self, x_t: &ArrayD<T>, t: usize) -> ArrayD<T>;
}

impl<T: Scalar, F: FnMut(&ArrayD<T>, usize) -> ArrayD<T>> NoisePredictor<T> for F {
    fn predict_noise(&mut self, x_t: &ArrayD<T>, t: usize) -> ArrayD<T> {
        self(x_t, t)
    }
}

fn check_same_shape<T: Scalar>(
    context: &'static str,
    a: &ArrayD<T>,
    b: &ArrayD<T>,
) -> Result<(), DiffusionError> {
    if a.shape() != b.shape() {
        return Err(DiffusionError::Shape {
            context,
            expected: a.shape().to_vec(),
            got: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Closed-form corruption to level `t`: `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn q_sample<T: Scalar>(
    x0: &ArrayD<T>,
    t: usize,
    eps: &ArrayD<T>,
    schedule: &NoiseSchedule,
) -> Result<ArrayD<T>, DiffusionError> {
    check_same_shape("q_sample noise", x0, eps)?;
    let ab = schedule.alpha_bar_at(t as isize)?;
    let (c0, c1) = (T::of_f64(ab.sqrt()), T::of_f64((1.0 - ab).sqrt()));
    let mut out = x0.mapv(|v| v * c0);
    out.zip_mut_with(eps, |o, &e| *o += c1 * e);
    Ok(out)
}

/// One step of the stepwise forward chain: `√(1−β_t)·x_{t−1} + √β_t·ε`.
/// Chaining this from t = 0..T must reproduce [`q_sample`]'s marginals; tests
/// hold it to that.
pub fn forward_chain_step<T: Scalar>(
    x_prev: &ArrayD<T>,
    t: usize,
    eps: &ArrayD<T>,
    schedule: &NoiseSchedule,
) -> Result<ArrayD<T>, DiffusionError> {
    check_same_shape("chain-step noise", x_prev, eps)?;
    if t >= schedule.t_count() {
        return Err(DiffusionError::BadTime { t: t as isize, t_count: schedule.t_count() });
    }
    let beta = schedule.beta()[t];
    let (c0, c1) = (T::of_f64((1.0 - beta).sqrt()), T::of_f64(beta.sqrt()));
    let mut out = x_prev.mapv(|v| v * c0);
    out.zip_mut_with(eps, |o, &e| *o += c1 * e);
    Ok(out)
}

/// Inverts the corruption formula: `(x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`.
pub fn predict_x0<T: Scalar>(
    x_t: &ArrayD<T>,
    t: usize,
    eps_pred: &ArrayD<T>,
    schedule: &NoiseSchedule,
) -> Result<ArrayD<T>, DiffusionError> {
    check_same_shape("predicted noise", x_t, eps_pred)?;
    let ab = schedule.alpha_bar_at(t as isize)?;
    let c1 = T::of_f64((1.0 - ab).sqrt());
    let inv = T::of_f64(1.0 / ab.sqrt());
    let mut out = x_t.clone();
    out.zip_mut_with(eps_pred, |o, &e| *o = (*o - c1 * e) * inv);
    Ok(out)
}

/// Deterministic (η = 0) DDIM transition from level `t` down to `t_prev`;
/// `t_prev = −1` is the clean image, making the final step return the x0
/// estimate exactly.
pub fn ddim_step<T: Scalar>(
    x_t: &ArrayD<T>,
    t: usize,
    t_prev: isize,
    eps_pred: &ArrayD<T>,
    schedule: &NoiseSchedule,
) -> Result<ArrayD<T>, DiffusionError> {
    if t_prev >= t as isize || t_prev < -1 {
        return Err(DiffusionError::BadTime { t: t_prev, t_count: schedule.t_count() });
    }
    let x0_hat = predict_x0(x_t, t, eps_pred, schedule)?;
    let ab_prev = schedule.alpha_bar_at(t_prev)?;
    let (c0, c1) = (T::of_f64(ab_prev.sqrt()), T::of_f64((1.0 - ab_prev).sqrt()));
    let mut out = x0_hat.mapv(|v| v * c0);
    out.zip_mut_with(eps_pred, |o, &e| *o += c1 * e);
    Ok(out)
}

/// Strictly decreasing timestep sub-sequence for DDIM, starting at T−1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerPlan {
    steps: Vec<usize>,
}

impl SamplerPlan {
    /// `s` uniformly spaced levels over a `t_count`-step schedule. The first
    /// entry is always T−1; with `s == t_count` the plan visits every step.
    pub fn uniform(t_count: usize, s: usize) -> Result<Self, DiffusionError> {
        if s == 0 || s > t_count {
            return Err(DiffusionError::BadPlan(format!(
                "need 1 <= steps <= {t_count}, got {s}"
            )));
        }
        let steps: Vec<usize> = (0..s)
            .map(|k| {
                let frac = t_count as f64 * (s - k) as f64 / s as f64;
                (frac.round() as usize).saturating_sub(1)
            })
            .collect();
        Self::custom(steps)
    }

    /// Validates an explicit plan: non-empty and strictly decreasing.
    pub fn custom(steps: Vec<usize>) -> Result<Self, DiffusionError> {
        if steps.is_empty() {
            return Err(DiffusionError::BadPlan("plan is empty".into()));
        }
        for w in steps.windows(2) {
            if w[1] >= w[0] {
                return Err(DiffusionError::BadPlan(format!(
                    "plan must strictly decrease, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(SamplerPlan { steps })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Runs DDIM from a noise map down to a clean image. Deterministic: bit-equal
/// inputs and parameters give bit-equal output.
pub fn ddim_sample_loop<T: Scalar, P: NoisePredictor<T> + ?Sized>(
    predictor: &mut P,
    schedule: &NoiseSchedule,
    plan: &SamplerPlan,
    x_start: ArrayD<T>,
) -> Result<ArrayD<T>, DiffusionError> {
    let steps = plan.steps();
    if steps[0] >= schedule.t_count() {
        return Err(DiffusionError::BadTime { t: steps[0] as isize, t_count: schedule.t_count() });
    }
    let mut x = x_start;
    for (k, &t) in steps.iter().enumerate() {
        let t_prev = if k + 1 < steps.len() { steps[k + 1] as isize } else { -1 };
        let eps = predictor.predict_noise(&x, t);
        x = ddim_step(&x, t, t_prev, &eps, schedule)?;
    }
    Ok(x)
}

/// Deterministically encodes a clean image into the noise map that
/// [`ddim_sample_loop`] would decode back to (approximately) the same image:
/// the same transition formula walked upward, evaluating ε at the current
/// level (the first hop, from the clean image, evaluates at the hop target
/// since the clean state has no level of its own).
pub fn ddim_encode_loop<T: Scalar, P: NoisePredictor<T> + ?Sized>(
    predictor: &mut P,
    schedule: &NoiseSchedule,
    plan: &SamplerPlan,
    x0: ArrayD<T>,
) -> Result<ArrayD<T>, DiffusionError> {
    let steps = plan.steps();
    if steps[0] >= schedule.t_count() {
        return Err(DiffusionError::BadTime { t: steps[0] as isize, t_count: schedule.t_count() });
    }
    let mut x = x0;
    let mut level: isize = -1;
    for &target in steps.iter().rev() {
        let eval_t = if level < 0 { target } else { level as usize };
        let eps = predictor.predict_noise(&x, eval_t);
        let x0_hat = if level < 0 {
            x.clone()
        } else {
            predict_x0(&x, level as usize, &eps, schedule)?
        };
        let ab = schedule.alpha_bar_at(target as isize)?;
        let (c0, c1) = (T::of_f64(ab.sqrt()), T::of_f64((1.0 - ab).sqrt()));
        let mut next = x0_hat.mapv(|v| v * c0);
        next.zip_mut_with(&eps, |o, &e| *o += c1 * e);
        x = next;
        level = target as isize;
    }
    Ok(x)
}
