//! Counterfactual generation for the causal diffusion autoencoder.
//!
//! Given a trained model, a factual image, and a set of `do(factor = value)`
//! assignments, the engine abducts the image's exogenous noise, replays the
//! causal mechanisms with the targeted factors clamped to the codes their
//! alignment heads assign to the requested values, and decodes the edited
//! code with a classifier-free-guided deterministic sampler seeded from the
//! factual image. With no assignments the same pipeline reconstructs.

mod engine;
mod guide;
mod spec;

pub use engine::{
    abduct, counterfactual_sweep, generate_counterfactual, semantic_to_latent,
    CounterfactualOutcome,
};
pub use guide::{guided_epsilon, GuidedPredictor};
pub use spec::{AbductionMode, CounterfactualConfig, InterventionSpec, NoiseInitMode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CounterfactualError {
    #[error("guidance weight must be a finite number in [0, 1], got {0}")]
    BadOmega(f64),
    #[error("intervention value for factor {factor} is not finite: {value}")]
    BadValue { factor: usize, value: f64 },
    #[error("factor {0} is targeted more than once")]
    DuplicateTarget(usize),
    #[error("target factor index {index} out of range for a model with {n_factors} factors")]
    TargetOutOfRange { index: usize, n_factors: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Model(#[from] cda_model::ModelError),
    #[error(transparent)]
    Diffusion(#[from] cda_diffusion::DiffusionError),
}
