//! Guidance: blending conditional and unconditional noise estimates.

use cda_diffusion::NoisePredictor;
use cda_model::CausalDiffAe;
use cda_tensor::nn::Params;
use cda_tensor::Scalar;
use ndarray::ArrayD;

/// `omega * eps_cond + (1 - omega) * eps_uncond`, elementwise.
pub fn guided_epsilon<T: Scalar>(
    omega: f64,
    eps_cond: &ArrayD<T>,
    eps_uncond: &ArrayD<T>,
) -> ArrayD<T> {
    let w = T::of_f64(omega);
    let one_minus = T::of_f64(1.0 - omega);
    let mut out = eps_cond.mapv(|c| c * w);
    out.zip_mut_with(eps_uncond, |o, &u| *o = *o + u * one_minus);
    out
}

/// A noise predictor that conditions the denoiser on a fixed code and blends
/// in the unconditional (learned-null-token) estimate with weight `1 - omega`.
///
/// The endpoint weights short-circuit: at `omega = 1` only the conditional
/// branch runs, and at `omega = 0` only the unconditional branch runs — so an
/// `omega = 0` decode is structurally independent of the code it was given.
pub struct GuidedPredictor<'m, T: Scalar> {
    model: &'m CausalDiffAe,
    params: &'m Params<T>,
    cond: ArrayD<T>,
    omega: f64,
}

impl<'m, T: Scalar> GuidedPredictor<'m, T> {
    /// `cond` is a `[batch, code_width]` semantic code.
    pub fn new(model: &'m CausalDiffAe, params: &'m Params<T>, cond: ArrayD<T>, omega: f64) -> Self {
        Self { model, params, cond, omega }
    }
}

impl<T: Scalar> NoisePredictor<T> for GuidedPredictor<'_, T> {
    fn predict_noise(&mut self, x_t: &ArrayD<T>, t: usize) -> ArrayD<T> {
        if self.omega == 1.0 {
            self.model.predict_noise_array(self.params, x_t, t, Some(&self.cond))
        } else if self.omega == 0.0 {
            self.model.predict_noise_array(self.params, x_t, t, None)
        } else {
            let eps_cond = self.model.predict_noise_array(self.params, x_t, t, Some(&self.cond));
            let eps_uncond = self.model.predict_noise_array(self.params, x_t, t, None);
            guided_epsilon(self.omega, &eps_cond, &eps_uncond)
        }
    }
}
