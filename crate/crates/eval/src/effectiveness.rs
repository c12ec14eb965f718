//! Intervention effectiveness: how close predictor readings on generated
//! counterfactuals land to the labels the ground-truth mechanisms assign.

use ndarray::{Array2, ArrayD};

use crate::regressor::PredictorSet;
use crate::EvalError;

/// Column-wise mean absolute error between two `[batch, k]` tables.
/// Nonnegative, and exactly zero only when the columns agree exactly.
pub fn mae_table(pred: &Array2<f64>, target: &Array2<f64>) -> Result<Vec<f64>, EvalError> {
    if pred.dim() != target.dim() {
        return Err(EvalError::Shape(format!(
            "prediction table {:?} vs target table {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Err(EvalError::Shape("empty tables".into()));
    }
    let (n, k) = pred.dim();
    Ok((0..k)
        .map(|j| {
            (0..n).map(|i| (pred[[i, j]] - target[[i, j]]).abs()).sum::<f64>() / n as f64
        })
        .collect())
}

/// Runs the predictors over generated counterfactual images and reports, per
/// factor, the mean absolute error against the true counterfactual labels
/// (normalized units). `true_labels_norm` is `[batch, n_factors]`.
pub fn effectiveness_mae(
    predictors: &PredictorSet,
    counterfactual_images: &ArrayD<f32>,
    true_labels_norm: &Array2<f64>,
) -> Result<Vec<f64>, EvalError> {
    let pred = predictors.predict(counterfactual_images)?;
    mae_table(&pred, true_labels_norm)
}
