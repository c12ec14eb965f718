//! The importance matrix `R`: how much each latent block matters for
//! predicting each generative factor.

use ndarray::Array2;

use crate::forest::{ForestConfig, RandomForest};
use crate::EvalError;

/// Minimum sample count for a meaningful forest fit.
pub const MIN_IMPORTANCE_SAMPLES: usize = 100;

/// Fits one forest per factor column of `factors` on the flattened latents
/// and returns `R` of shape `[n_slots, n_factors]`, where slot `i` covers
/// latent columns `[i*d_z, (i+1)*d_z)` and `R[i][j]` is the total importance
/// of that block for factor `j` (each column sums to 1 unless the factor's
/// forest never split).
///
/// Latents are expected to be posterior means (deterministic encodings), and
/// each factor column must actually vary.
pub fn fit_importance_matrix(
    latents: &Array2<f64>,
    d_z: usize,
    factors: &Array2<f64>,
    cfg: &ForestConfig,
) -> Result<Array2<f64>, EvalError> {
    let (n, width) = latents.dim();
    let k = factors.ncols();
    if factors.nrows() != n {
        return Err(EvalError::Shape(format!(
            "{n} latent rows but {} factor rows",
            factors.nrows()
        )));
    }
    if n < MIN_IMPORTANCE_SAMPLES {
        return Err(EvalError::DegenerateData(format!(
            "need at least {MIN_IMPORTANCE_SAMPLES} samples for importance estimation, got {n}"
        )));
    }
    if d_z == 0 || width == 0 || width % d_z != 0 {
        return Err(EvalError::Shape(format!(
            "latent width {width} is not a positive multiple of the block width {d_z}"
        )));
    }
    if k == 0 {
        return Err(EvalError::Shape("no factor columns".into()));
    }
    let n_slots = width / d_z;

    let mut r = Array2::<f64>::zeros((n_slots, k));
    for j in 0..k {
        let col: Vec<f64> = factors.column(j).to_vec();
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        if !(hi - lo).is_finite() || hi - lo < 1e-9 {
            return Err(EvalError::DegenerateData(format!(
                "factor column {j} is constant (range {:.3e})",
                hi - lo
            )));
        }
        // Decorrelate the per-factor forests' bootstrap draws.
        let cfg_j = ForestConfig {
            seed: cfg.seed ^ (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            ..*cfg
        };
        let forest = RandomForest::fit(latents, &col, &cfg_j)?;
        for (c, &imp) in forest.feature_importances().iter().enumerate() {
            r[[c / d_z, j]] += imp;
        }
    }
    Ok(r)
}
