//! Loss terms.
//!
//! The objective is the denoising error plus a weighted latent regularizer.
//! The noise code carries a closed-form KL against the standard normal; the
//! causal code is pulled toward the label-conditioned alignment prior through
//! the negative log-density of the pushed-forward sample (a single-sample
//! estimate of the intractable KL through the mechanisms — the entropy term
//! it drops is constant in the prior parameters, so the pull on the prior is
//! the same). Both terms reduce per sample, so supervision masks can zero out
//! unlabeled rows exactly.

use cda_tensor::nn::Graph;
use cda_tensor::{Scalar, Var};

/// Per-sample `KL(N(mu, diag e^logvar) || N(0, I))` summed over coordinates:
/// `0.5 * Σ (mu² + e^logvar − 1 − logvar)`. Returns `[B, 1]`.
pub fn kl_unit_gaussian_rows<T: Scalar>(g: &mut Graph<T>, mu: Var, logvar: Var) -> Var {
    let mu2 = g.square(mu);
    let ev = g.exp(logvar);
    let sum = g.add(mu2, ev);
    let sum = g.sub(sum, logvar);
    let shifted = g.affine(sum, 0.5, 0.0);
    let half = g.affine(shifted, 1.0, -0.5);
    g.sum_axis(half, 1)
}

/// Per-sample negative log-density of `z` under `N(mu, diag var)` summed over
/// coordinates: `0.5 * Σ [ln(2π) + ln var + (z − mu)² / var]`. Returns `[B, 1]`.
pub fn gaussian_nll_rows<T: Scalar>(g: &mut Graph<T>, z: Var, mu: Var, var: Var) -> Var {
    let diff = g.sub(z, mu);
    let sq = g.square(diff);
    let maha = g.div(sq, var);
    let logdet = g.ln(var);
    let inner = g.add(maha, logdet);
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let inner = g.affine(inner, 1.0, ln_2pi);
    let half = g.affine(inner, 0.5, 0.0);
    g.sum_axis(half, 1)
}

/// Mean over the batch of per-sample rows gated by a `[B, 1]` mask:
/// `Σ_b rows_b · mask_b / B`. Rows with mask 0 contribute exactly zero — in
/// value and in gradient.
pub fn masked_batch_mean<T: Scalar>(g: &mut Graph<T>, rows: Var, mask_col: Var) -> Var {
    let gated = g.mul(rows, mask_col);
    g.mean_all(gated)
}
