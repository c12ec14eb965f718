//! Descriptions of *what* counterfactual to generate: which factors to set to
//! which values, how strongly to steer the decoder toward the edited code, and
//! which sources of randomness (if any) the pipeline may use.

use crate::CounterfactualError;

/// How the exogenous noise `u` is recovered from the factual image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AbductionMode {
    /// Use the posterior mean. Deterministic; the default.
    PosteriorMean,
    /// Draw one posterior sample with a dedicated seeded stream.
    PosteriorSample { seed: u64 },
}

/// How the terminal noise image that seeds the decoder is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseInitMode {
    /// Deterministically invert the factual image with the conditional
    /// denoiser (running the sampler update in reverse). Keeps everything the
    /// code does not describe — stroke texture, background — pinned to the
    /// factual image. The default.
    DdimEncode,
    /// Diffuse the factual image to the terminal step with fresh seeded
    /// noise. Cheaper, but the decode is no longer a reconstruction.
    QSample { seed: u64 },
}

/// A do-intervention request: assignments `factor -> value` (in normalized
/// label units) plus the guidance weight `omega`.
///
/// The decoder blends conditional and unconditional noise estimates as
/// `omega * eps_cond + (1 - omega) * eps_uncond`, so `omega = 1` trusts the
/// edited code fully and `omega = 0` ignores it entirely.
///
/// Construction checks that target factors are distinct, values are finite,
/// and `omega` lies in `[0, 1]`. Whether each index actually names a factor of
/// the model is checked by the engine, which knows the factor count.
#[derive(Debug, Clone, PartialEq)]
pub struct InterventionSpec {
    targets: Vec<(usize, f64)>,
    omega: f64,
}

impl InterventionSpec {
    pub fn new(targets: Vec<(usize, f64)>, omega: f64) -> Result<Self, CounterfactualError> {
        if !omega.is_finite() || !(0.0..=1.0).contains(&omega) {
            return Err(CounterfactualError::BadOmega(omega));
        }
        for (k, &(factor, value)) in targets.iter().enumerate() {
            if !value.is_finite() {
                return Err(CounterfactualError::BadValue { factor, value });
            }
            if targets[..k].iter().any(|&(earlier, _)| earlier == factor) {
                return Err(CounterfactualError::DuplicateTarget(factor));
            }
        }
        Ok(Self { targets, omega })
    }

    /// A spec with no assignments: the decode reproduces the factual image
    /// (exactly how faithfully depends on training and the noise-init mode).
    pub fn null(omega: f64) -> Result<Self, CounterfactualError> {
        Self::new(Vec::new(), omega)
    }

    pub fn targets(&self) -> &[(usize, f64)] {
        &self.targets
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Checks every target index against the model's factor count.
    pub fn validate_for(&self, n_factors: usize) -> Result<(), CounterfactualError> {
        for &(factor, _) in &self.targets {
            if factor >= n_factors {
                return Err(CounterfactualError::TargetOutOfRange { index: factor, n_factors });
            }
        }
        Ok(())
    }
}

/// Pipeline knobs that are independent of the specific intervention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterfactualConfig {
    pub abduction: AbductionMode,
    pub noise_init: NoiseInitMode,
    /// Number of sampler levels used for both encoding and decoding.
    pub sample_steps: usize,
}

impl CounterfactualConfig {
    /// Fully deterministic pipeline: posterior-mean abduction and sampler
    /// inversion, no random draws anywhere.
    pub fn deterministic(sample_steps: usize) -> Self {
        Self {
            abduction: AbductionMode::PosteriorMean,
            noise_init: NoiseInitMode::DdimEncode,
            sample_steps,
        }
    }
}
