//! Disentanglement scoring from an importance matrix.

use ndarray::Array2;

use crate::EvalError;

/// Disentanglement score in `[0, 1]` for a nonnegative importance matrix `R`
/// of shape `[n_slots, n_factors]`.
///
/// Each slot's importance profile is row-normalized to a distribution
/// `P_i = R_i / Σ_j R_ij`; the slot's score is one minus that distribution's
/// entropy in base `n_factors`, `D_i = 1 + Σ_j P_ij·log_K P_ij` (with
/// `0·log 0 = 0`); and the total is the importance-weighted average
/// `Σ_i ρ_i·D_i` with `ρ_i = Σ_j R_ij / Σ_ij R_ij`. Slots with no importance
/// anywhere get zero weight and are skipped.
///
/// A slot that predicts exactly one factor scores 1; a slot spread evenly
/// over all factors scores 0.
pub fn dci_score(r: &Array2<f64>) -> Result<f64, EvalError> {
    let (n_slots, k) = r.dim();
    if k < 2 {
        return Err(EvalError::DegenerateData(format!(
            "disentanglement needs at least 2 factor columns, got {k}"
        )));
    }
    if n_slots == 0 {
        return Err(EvalError::DegenerateData("importance matrix has no slots".into()));
    }
    for &v in r.iter() {
        if !v.is_finite() {
            return Err(EvalError::NonFinite("importance matrix must be finite".into()));
        }
        if v < 0.0 {
            return Err(EvalError::DegenerateData(format!(
                "importance matrix must be nonnegative, found {v}"
            )));
        }
    }
    let total: f64 = r.iter().sum();
    if total <= 0.0 {
        return Err(EvalError::DegenerateData("importance matrix is all zero".into()));
    }

    let log_k = (k as f64).ln();
    let mut score = 0.0;
    for i in 0..n_slots {
        let row_sum: f64 = r.row(i).sum();
        if row_sum == 0.0 {
            continue;
        }
        let mut plogp = 0.0;
        for j in 0..k {
            let p = r[[i, j]] / row_sum;
            if p > 0.0 {
                plogp += p * p.ln() / log_k;
            }
        }
        score += (row_sum / total) * (1.0 + plogp);
    }
    // The score is in [0, 1] mathematically; clamp only shaves rounding at
    // the endpoints.
    Ok(score.clamp(0.0, 1.0))
}
