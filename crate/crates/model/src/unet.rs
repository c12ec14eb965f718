//! Conditional denoising UNet.
//!
//! Predicts the noise in a corrupted image given the diffusion step and a
//! conditioning code. The step enters as sinusoidal features through a small
//! MLP; the code is projected into the same embedding and added, and each
//! residual block modulates its features from the combined embedding with a
//! per-channel scale and shift. Every block's final convolution — and the
//! output head — starts at zero, so a freshly initialised network predicts
//! exactly zero noise and training starts from the identity.

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

/// Per-channel scale and shift computed from the embedding:
/// `h * (1 + s) + b`.
struct Film {
    lin: Linear,
    channels: usize,
}

impl Film {
    fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        emb_dim: usize,
        channels: usize,
    ) -> Self {
        // Zero-initialised so modulation starts as the identity.
        Film { lin: Linear::zeros(params, name, emb_dim, 2 * channels), channels }
    }

    fn apply<T: Scalar>(&self, g: &mut Graph<T>, h: Var, emb: Var) -> Var {
        let batch = g.shape(h)[0];
        let e = g.silu(emb);
        let sb = self.lin.forward(g, e);
        let s = g.narrow(sb, 1, 0, self.channels);
        let b = g.narrow(sb, 1, self.channels, self.channels);
        let s4 = g.reshape(s, &[batch, self.channels, 1, 1]);
        let b4 = g.reshape(b, &[batch, self.channels, 1, 1]);
        let scale = g.affine(s4, 1.0, 1.0);
        let scaled = g.mul(h, scale);
        g.add(scaled, b4)
    }
}

struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    film: Film,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
}

impl ResBlock {
    fn new<T: Scalar>(
        params: &mut Params<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        emb_dim: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let norm1 = GroupNorm::new(params, &format!("{name}.norm1"), c_in, norm_groups(c_in));
        let conv1 = Conv2d::new(params, &format!("{name}.conv1"), c_in, c_out, 3, 1, 1, rng);
        let film = Film::new(params, &format!("{name}.film"), emb_dim, c_out);
        let norm2 = GroupNorm::new(params, &format!("{name}.norm2"), c_out, norm_groups(c_out));
        let conv2 = Conv2d::zeros(params, &format!("{name}.conv2"), c_out, c_out, 3, 1, 1);
        let skip = if c_in != c_out {
            Some(Conv2d::new(params, &format!("{name}.skip"), c_in, c_out, 1, 1, 0, rng))
        } else {
            None
        };
        ResBlock { norm1, conv1, film, norm2, conv2, skip }
    }

    fn forward<T: Scalar>(&self, g: &mut Graph<T>, h: Var, emb: Var) -> Var {
        let mut x = self.norm1.forward(g, h);
        x = g.silu(x);
        x = self.conv1.forward(g, x);
        x = self.film.apply(g, x, emb);
        x = self.norm2.forward(g, x);
        x = g.silu(x);
        x = self.conv2.forward(g, x);
        let s = match &self.skip {
            Some(conv) => conv.forward(g, h),
            None => h,
        };
        g.add(x, s)
    }
}

pub struct NoiseUnet {
    stem: Conv2d,
    temb_fc1: Linear,
    temb_fc2: Linear,
    cond_proj: Linear,
    down: Vec<ResBlock>,
    downsample: Vec<Conv2d>,
    mid: ResBlock,
    up: Vec<ResBlock>,
    up_conv: Vec<Conv2d>,
    out_norm: GroupNorm,
    out_conv: Conv2d,
    emb_dim: usize,
}

impl NoiseUnet {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let emb = cfg.emb_dim;
        let ch: Vec<usize> = cfg.channel_mults.iter().map(|m| cfg.base_channels * m).collect();
        let levels = ch.len();

        let stem = Conv2d::new(params, &format!("{prefix}.stem"), cfg.channels, ch[0], 3, 1, 1, rng);
        let temb_fc1 = Linear::new(params, &format!("{prefix}.temb1"), emb, emb, rng);
        let temb_fc2 = Linear::new(params, &format!("{prefix}.temb2"), emb, emb, rng);
        let cond_proj = Linear::new(params, &format!("{prefix}.cond"), cfg.code_width(), emb, rng);

        let mut down = Vec::new();
        let mut downsample = Vec::new();
        for i in 0..levels {
            let c_in = if i == 0 { ch[0] } else { ch[i - 1] };
            down.push(ResBlock::new(params, &format!("{prefix}.down{i}"), c_in, ch[i], emb, rng));
            if i + 1 < levels {
                downsample.push(Conv2d::new(
                    params,
                    &format!("{prefix}.pool{i}"),
                    ch[i],
                    ch[i],
                    3,
                    2,
                    1,
                    rng,
                ));
            }
        }

        let mid = ResBlock::new(
            params,
            &format!("{prefix}.mid"),
            ch[levels - 1],
            ch[levels - 1],
            emb,
            rng,
        );

        // Up blocks consume the concatenation of the upsampled state and the
        // skip from the matching down level, both at `ch[i]` channels.
        let mut up = Vec::new();
        let mut up_conv = Vec::new();
        for i in 0..levels {
            up.push(ResBlock::new(params, &format!("{prefix}.up{i}"), 2 * ch[i], ch[i], emb, rng));
            if i > 0 {
                up_conv.push(Conv2d::new(
                    params,
                    &format!("{prefix}.unpool{i}"),
                    ch[i],
                    ch[i - 1],
                    3,
                    1,
                    1,
                    rng,
                ));
            }
        }

        let out_norm = GroupNorm::new(params, &format!("{prefix}.out.norm"), ch[0], norm_groups(ch[0]));
        let out_conv = Conv2d::zeros(params, &format!("{prefix}.out.conv"), ch[0], cfg.channels, 3, 1, 1);

        NoiseUnet {
            stem,
            temb_fc1,
            temb_fc2,
            cond_proj,
            down,
            downsample,
            mid,
            up,
            up_conv,
            out_norm,
            out_conv,
            emb_dim: emb,
        }
    }

    /// Noise estimate for `x_t` `[B, C, H, W]` given per-sample timestep
    /// features `[B, emb_dim]` and a conditioning code `[B, n * d_z]`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, x_t: Var, t_feat: Var, cond: Var) -> Var {
        debug_assert_eq!(g.shape(t_feat)[1], self.emb_dim);
        let t1 = self.temb_fc1.forward(g, t_feat);
        let t1 = g.silu(t1);
        let temb = self.temb_fc2.forward(g, t1);
        let cemb = self.cond_proj.forward(g, cond);
        let emb = g.add(temb, cemb);

        let mut h = self.stem.forward(g, x_t);
        let mut skips = Vec::with_capacity(self.down.len());
        for (i, block) in self.down.iter().enumerate() {
            h = block.forward(g, h, emb);
            skips.push(h);
            if i < self.downsample.len() {
                h = self.downsample[i].forward(g, h);
            }
        }

        h = self.mid.forward(g, h, emb);

        for i in (0..self.up.len()).rev() {
            let joined = g.concat(&[h, skips[i]], 1);
            h = self.up[i].forward(g, joined, emb);
            if i > 0 {
                h = g.upsample_nearest_2x(h);
                h = self.up_conv[i - 1].forward(g, h);
            }
        }

        let mut out = self.out_norm.forward(g, h);
        out = g.silu(out);
        self.out_conv.forward(g, out)
    }
}
