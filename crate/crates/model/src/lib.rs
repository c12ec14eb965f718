//! Causal diffusion autoencoder.
//!
//! A diffusion model whose conditioning code is produced by a structural
//! causal model over latent blocks: a convolutional encoder infers a
//! per-image noise code, learned mechanisms push it through the causal graph,
//! and a conditional UNet denoises images given the resulting code. Labels
//! shape the latent space through a per-factor alignment prior; samples
//! without labels train the same network through a learned null token, so one
//! model serves both the conditional and unconditional branches of guided
//! generation.

mod checkpoint;
mod config;
mod embed;
mod encoder;
mod loss;
mod model;
mod prior;
mod unet;

pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{gamma_at, ModelConfig, TrainConfig};
pub use embed::timestep_features;
pub use encoder::Encoder;
pub use loss::{gaussian_nll_rows, kl_unit_gaussian_rows, masked_batch_mean};
pub use model::CausalDiffAe;
pub use prior::AlignmentPrior;
pub use train::{step_rng, train_step, StepStats, TrainBatch};
pub use unet::NoiseUnet;

use cda_diffusion::DiffusionError;
use cda_scm::ScmError;
use cda_tensor::ContainerError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad model configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("diffusion error: {0}")]
    Diffusion(#[from] DiffusionError),
    #[error("causal mechanism error: {0}")]
    Scm(#[from] ScmError),
    #[error("non-finite {what} at step {step}; parameters left unchanged")]
    NonFinite { step: u64, what: &'static str },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("container error: {0}")]
    Container(#[from] ContainerError),
}
