//! Sinusoidal timestep features.
//!
//! The integer diffusion step enters the network through fixed sin/cos
//! features at geometrically spaced frequencies (the transformer positional
//! encoding). The features are data, not parameters, so they are computed
//! host-side and fed to the graph as an input leaf.

use cda_tensor::Scalar;
use ndarray::{ArrayD, IxDyn};

/// `[B, dim]` sinusoidal features for a batch of timesteps; `dim` must be
/// even. Frequencies run from 1 down to 1/10000 so neighbouring steps are
/// distinguishable at the fast end while the slow end encodes the coarse
/// position in the schedule.
pub fn timestep_features<T: Scalar>(t: &[usize], dim: usize) -> ArrayD<T> {
    assert!(dim >= 2 && dim % 2 == 0, "embedding width must be even and >= 2, got {dim}");
    let half = dim / 2;
    let mut out = ArrayD::zeros(IxDyn(&[t.len(), dim]));
    for (b, &tb) in t.iter().enumerate() {
        for k in 0..half {
            let exponent = if half > 1 { k as f64 / (half - 1) as f64 } else { 0.0 };
            let freq = (-(10_000f64).ln() * exponent).exp();
            let angle = tb as f64 * freq;
            out[[b, k]] = T::of_f64(angle.sin());
            out[[b, half + k]] = T::of_f64(angle.cos());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_distinguish_nearby_and_far_steps() {
        let f = timestep_features::<f64>(&[0, 1, 500], 16);
        // t = 0 gives sin = 0, cos = 1 in every band.
        for k in 0..8 {
            assert_eq!(f[[0, k]], 0.0);
            assert_eq!(f[[0, 8 + k]], 1.0);
        }
        // Rows are distinct.
        let row = |b: usize| (0..16).map(|k| f[[b, k]]).collect::<Vec<_>>();
        assert_ne!(row(0), row(1));
        assert_ne!(row(1), row(2));
        // All entries are bounded by 1 in magnitude.
        assert!(f.iter().all(|v| v.abs() <= 1.0));
    }
}
