//! Architecture and training hyperparameters.
//!
//! Both structs serialize to TOML so a checkpoint can carry an exact snapshot
//! of the model that produced it; unknown keys are rejected on the way back in
//! so a stale or hand-edited snapshot fails loudly instead of silently
//! reconfiguring the network.

use cda_diffusion::{NoiseSchedule, ScheduleKind};
use serde::{Deserialize, Serialize};

use crate::ModelError;

/// Everything needed to rebuild the network's parameter store: image format,
/// latent layout, encoder/denoiser widths, and the noise schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of causal factors (latent blocks).
    pub n_factors: usize,
    /// Width of each factor's latent block; the full code has `n_factors * d_z`
    /// coordinates.
    pub d_z: usize,
    /// Image channels.
    pub channels: usize,
    /// Image height and width (square).
    pub resolution: usize,
    /// Channel widths of the encoder's strided conv levels.
    pub encoder_channels: Vec<usize>,
    /// Hidden width of the encoder's dense head.
    pub encoder_hidden: usize,
    /// Base channel count of the denoiser UNet.
    pub base_channels: usize,
    /// Per-level channel multipliers of the UNet; level `i` has
    /// `base_channels * channel_mults[i]` channels and half the resolution of
    /// level `i - 1`.
    pub channel_mults: Vec<usize>,
    /// Width of the shared timestep/conditioning embedding (must be even).
    pub emb_dim: usize,
    /// Hidden width of the per-factor alignment-prior networks.
    pub prior_hidden: usize,
    /// Floor on the alignment prior's variances.
    pub sigma2_min: f64,
    /// Noise schedule shape ("linear" or "cosine").
    pub schedule: String,
    /// Diffusion step count T.
    pub t_count: usize,
}

impl ModelConfig {
    /// A small profile suitable for laptop-scale runs; callers override
    /// individual fields from their own configuration.
    pub fn small(n_factors: usize, channels: usize, resolution: usize) -> Self {
        ModelConfig {
            n_factors,
            d_z: 4,
            channels,
            resolution,
            encoder_channels: vec![16, 32],
            encoder_hidden: 128,
            base_channels: 24,
            channel_mults: vec![1, 2],
            emb_dim: 64,
            prior_hidden: 32,
            sigma2_min: 1e-4,
            schedule: "linear".into(),
            t_count: 1000,
        }
    }

    /// Full latent width `n_factors * d_z`.
    pub fn code_width(&self) -> usize {
        self.n_factors * self.d_z
    }

    pub fn schedule_kind(&self) -> Result<ScheduleKind, ModelError> {
        self.schedule
            .parse::<ScheduleKind>()
            .map_err(ModelError::Config)
    }

    /// Builds the noise schedule this model trains against (linear schedules
    /// use the standard 1e-4..0.02 β range).
    pub fn noise_schedule(&self) -> Result<NoiseSchedule, ModelError> {
        let kind = self.schedule_kind()?;
        NoiseSchedule::make(kind, self.t_count, 1e-4, 0.02).map_err(ModelError::Diffusion)
    }

    /// Rejects inconsistent shape combinations before any parameter is
    /// allocated.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.n_factors == 0 || self.d_z == 0 {
            return fail("latent layout must have at least one factor and one coordinate".into());
        }
        if self.channels == 0 {
            return fail("images must have at least one channel".into());
        }
        if self.emb_dim < 2 || self.emb_dim % 2 != 0 {
            return fail(format!("embedding width must be even and >= 2, got {}", self.emb_dim));
        }
        if self.encoder_channels.is_empty() || self.channel_mults.is_empty() {
            return fail("encoder and denoiser need at least one level each".into());
        }
        if self.channel_mults.contains(&0) || self.encoder_channels.contains(&0) {
            return fail("channel widths must be positive".into());
        }
        let enc_factor = 1usize << self.encoder_channels.len();
        if self.resolution % enc_factor != 0 {
            return fail(format!(
                "resolution {} not divisible by encoder downsampling factor {}",
                self.resolution, enc_factor
            ));
        }
        let unet_factor = 1usize << (self.channel_mults.len() - 1);
        if self.resolution % unet_factor != 0 {
            return fail(format!(
                "resolution {} not divisible by denoiser downsampling factor {}",
                self.resolution, unet_factor
            ));
        }
        if self.sigma2_min <= 0.0 {
            return fail(format!("variance floor must be positive, got {}", self.sigma2_min));
        }
        if self.t_count == 0 {
            return fail("diffusion step count must be at least 1".into());
        }
        self.schedule_kind()?;
        Ok(())
    }
}

/// Optimisation hyperparameters: learning rate, clipping, and the ramp that
/// brings the latent regularizer in gradually.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Final weight of the latent regularizer.
    pub gamma_final: f64,
    /// Steps over which the regularizer weight ramps linearly from 0 to
    /// `gamma_final`; 0 applies the full weight from the first step.
    pub gamma_anneal_steps: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { lr: 1e-4, clip_norm: Some(1.0), gamma_final: 1.0, gamma_anneal_steps: 5000 }
    }
}

/// Regularizer weight at a given step: a linear ramp reaching `gamma_final`
/// after `gamma_anneal_steps` steps.
pub fn gamma_at(cfg: &TrainConfig, step: u64) -> f64 {
    if cfg.gamma_anneal_steps == 0 {
        return cfg.gamma_final;
    }
    let frac = (step as f64 / cfg.gamma_anneal_steps as f64).min(1.0);
    frac * cfg.gamma_final
}
