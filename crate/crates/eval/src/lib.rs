//! Quantitative evaluation for the causal diffusion autoencoder.
//!
//! Two instruments:
//!
//! * **Disentanglement** — per-factor tree-ensemble regressors on the learned
//!   latents yield an importance matrix over latent blocks, scored by
//!   entropy-based concentration ([`dci_score`]).
//! * **Effectiveness** — per-factor convolutional regressors read factor
//!   values off generated counterfactual images, compared against the labels
//!   the ground-truth mechanisms assign ([`effectiveness_mae`]).
//!
//! Everything is deterministic under a fixed seed; the forest is additionally
//! invariant to the order of its input rows.

mod dci;
mod effectiveness;
mod forest;
mod importance;
mod regressor;

pub use dci::dci_score;
pub use effectiveness::{effectiveness_mae, mae_table};
pub use forest::{ForestConfig, RandomForest};
pub use importance::{fit_importance_matrix, MIN_IMPORTANCE_SAMPLES};
pub use regressor::{
    train_anticausal_predictors, ConvRegressor, PredictorConfig, PredictorSet, NORMALIZED_RANGE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("non-finite values: {0}")]
    NonFinite(String),
    #[error(
        "predictor for factor '{factor}' failed validation: MAE {val_mae:.4} exceeds {allowed:.4}"
    )]
    PredictorQuality { factor: String, val_mae: f64, allowed: f64 },
}
