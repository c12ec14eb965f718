//! Convolutional noise-posterior encoder.
//!
//! Maps a clean image to the mean and log-variance of a diagonal Gaussian
//! over the exogenous noise code: strided conv levels halve the resolution
//! while widening channels, then a two-layer dense head reads the flattened
//! feature map into `2 * n * d_z` statistics.

use cda_tensor::nn::{Conv2d, Graph, GroupNorm, Linear, Params};
use cda_tensor::{Scalar, Var};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;

fn norm_groups(channels: usize) -> usize {
    if channels % 8 == 0 {
        8
    } else {
        1
    }
}

struct EncLevel {
    conv: Conv2d,
    norm: GroupNorm,
}

pub struct Encoder {
    levels: Vec<EncLevel>,
    fc1: Linear,
    fc2: Linear,
    flat_width: usize,
    code_width: usize,
}

impl Encoder {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut c_in = cfg.channels;
        let mut res = cfg.resolution;
        let mut levels = Vec::new();
        for (i, &c_out) in cfg.encoder_channels.iter().enumerate() {
            let conv =
                Conv2d::new(params, &format!("{prefix}.lvl{i}.conv"), c_in, c_out, 3, 2, 1, rng);
            let norm =
                GroupNorm::new(params, &format!("{prefix}.lvl{i}.norm"), c_out, norm_groups(c_out));
            levels.push(EncLevel { conv, norm });
            c_in = c_out;
            res /= 2;
        }
        let flat_width = c_in * res * res;
        let code_width = cfg.code_width();
        let fc1 = Linear::new(params, &format!("{prefix}.fc1"), flat_width, cfg.encoder_hidden, rng);
        let fc2 = Linear::new(params, &format!("{prefix}.fc2"), cfg.encoder_hidden, 2 * code_width, rng);
        Encoder { levels, fc1, fc2, flat_width, code_width }
    }

    /// `[B, C, H, W]` image to `(mu, logvar)`, each `[B, n * d_z]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x0: Var) -> (Var, Var) {
        let batch = g.shape(x0)[0];
        let mut h = x0;
        for level in &self.levels {
            h = level.conv.forward(g, h);
            h = level.norm.forward(g, h);
            h = g.silu(h);
        }
        let flat = g.reshape(h, &[batch, self.flat_width]);
        let hidden = self.fc1.forward(g, flat);
        let hidden = g.silu(hidden);
        let stats = self.fc2.forward(g, hidden);
        let mu = g.narrow(stats, 1, 0, self.code_width);
        let logvar = g.narrow(stats, 1, self.code_width, self.code_width);
        (mu, logvar)
    }
}
