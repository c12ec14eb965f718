//! Label-conditioned alignment prior.
//!
//! One small network per factor maps that factor's scalar (normalized) label
//! to the mean and variance of a diagonal Gaussian over the factor's latent
//! block. Supervision enters the latent space only through these networks, so
//! each factor's label can shape only its own block. Variances go through a
//! softplus and a positive floor: the prior can sharpen around its mean but
//! never collapse to a point mass, which would make its log-density
//! unbounded.

use cda_tensor::nn::{Graph, Linear, Params};
use cda_tensor::{Scalar, Var};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;

struct FactorNet {
    fc1: Linear,
    mu_head: Linear,
    var_head: Linear,
}

pub struct AlignmentPrior {
    nets: Vec<FactorNet>,
    d_z: usize,
    sigma2_min: f64,
}

impl AlignmentPrior {
    pub fn new<T: Scalar>(
        params: &mut Params<T>,
        prefix: &str,
        cfg: &ModelConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let nets = (0..cfg.n_factors)
            .map(|i| FactorNet {
                fc1: Linear::new(params, &format!("{prefix}.{i}.fc1"), 1, cfg.prior_hidden, rng),
                mu_head: Linear::new(params, &format!("{prefix}.{i}.mu"), cfg.prior_hidden, cfg.d_z, rng),
                var_head: Linear::new(params, &format!("{prefix}.{i}.var"), cfg.prior_hidden, cfg.d_z, rng),
            })
            .collect();
        AlignmentPrior { nets, d_z: cfg.d_z, sigma2_min: cfg.sigma2_min }
    }

    pub fn n_factors(&self) -> usize {
        self.nets.len()
    }

    /// `[B, n]` normalized labels to `(mu, var)`, each `[B, n * d_z]` with the
    /// per-factor blocks laid out contiguously. Variances are
    /// `softplus(raw) + sigma2_min`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, y: Var) -> (Var, Var) {
        let shape = g.shape(y).to_vec();
        assert!(
            shape.len() == 2 && shape[1] == self.nets.len(),
            "labels must be [B, {}], got {:?}",
            self.nets.len(),
            shape
        );
        let mut mu_blocks = Vec::with_capacity(self.nets.len());
        let mut var_blocks = Vec::with_capacity(self.nets.len());
        for (i, net) in self.nets.iter().enumerate() {
            let yi = g.narrow(y, 1, i, 1);
            let h = net.fc1.forward(g, yi);
            let h = g.tanh(h);
            let mu = net.mu_head.forward(g, h);
            let raw = net.var_head.forward(g, h);
            let sp = g.softplus(raw);
            let var = g.affine(sp, 1.0, self.sigma2_min);
            mu_blocks.push(mu);
            var_blocks.push(var);
        }
        let mu = g.concat(&mu_blocks, 1);
        let var = g.concat(&var_blocks, 1);
        debug_assert_eq!(g.shape(mu), &[shape[0], self.nets.len() * self.d_z]);
        (mu, var)
    }
}
