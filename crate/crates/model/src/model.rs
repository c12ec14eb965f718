//! The assembled model: noise encoder, causal mechanisms, alignment prior,
//! null conditioning token, and conditional denoiser, all drawing parameters
//! from one named store.
//!
//! Graph-building methods (`posterior`, `sample_u`, `latents`, `mix_cond`,
//! `noise_estimate`) compose the training loss; array-in/array-out wrappers
//! below them serve inference, where no gradients are needed but determinism
//! still is.

use cda_scm::{CausalGraph, MechanismSet};
use cda_tensor::nn::{randn, Graph, ParamId, Params};
use cda_tensor::{Scalar, Var};
use ndarray::{Array2, ArrayD, IxDyn};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::embed::timestep_features;
use crate::encoder::Encoder;
use crate::prior::AlignmentPrior;
use crate::unet::NoiseUnet;
use crate::ModelError;

pub struct CausalDiffAe {
    cfg: ModelConfig,
    causal_graph: CausalGraph,
    pub encoder: Encoder,
    pub prior: AlignmentPrior,
    pub mechanisms: MechanismSet,
    pub unet: NoiseUnet,
    null_token: ParamId,
}

impl CausalDiffAe {
    /// Builds the model, registering every parameter in `params`. The
    /// registration order is fixed by the architecture, which is what lets a
    /// checkpoint rebuild the store by name and the optimiser state by index.
    pub fn new<T: Scalar>(
        cfg: ModelConfig,
        causal_graph: CausalGraph,
        params: &mut Params<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        if causal_graph.n() != cfg.n_factors {
            return Err(ModelError::Config(format!(
                "causal graph has {} variables but the model expects {} factors",
                causal_graph.n(),
                cfg.n_factors
            )));
        }
        let encoder = Encoder::new(params, "enc", &cfg, rng);
        let mechanisms = MechanismSet::new(params, "scm", &causal_graph, cfg.d_z, rng);
        let prior = AlignmentPrior::new(params, "prior", &cfg, rng);
        let unet = NoiseUnet::new(params, "unet", &cfg, rng);
        // The stand-in code for unlabeled samples: trained, and scaled like a
        // typical latent draw at initialisation.
        let null_token = params.register("null_token", randn(&[cfg.code_width()], 1.0, rng));
        Ok(CausalDiffAe { cfg, causal_graph, encoder, prior, mechanisms, unet, null_token })
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn causal_graph(&self) -> &CausalGraph {
        &self.causal_graph
    }

    pub fn null_token_id(&self) -> ParamId {
        self.null_token
    }

    // ---- graph-building pieces ------------------------------------------

    /// Noise-posterior statistics `(mu, logvar)` for a clean image batch.
    pub fn posterior<T: Scalar>(&self, g: &mut Graph<T>, x0: Var) -> (Var, Var) {
        self.encoder.forward(g, x0)
    }

    /// Reparameterized draw `u = mu + exp(logvar / 2) * eps` with the
    /// standard-normal draw supplied as an input leaf.
    pub fn sample_u<T: Scalar>(&self, g: &mut Graph<T>, mu: Var, logvar: Var, eps: Var) -> Var {
        let half = g.scale(logvar, 0.5);
        let sigma = g.exp(half);
        let noise = g.mul(sigma, eps);
        g.add(mu, noise)
    }

    /// Pushes exogenous noise through the causal mechanisms: `z = f(u)`.
    pub fn latents<T: Scalar>(&self, g: &mut Graph<T>, u: Var) -> Result<Var, ModelError> {
        self.mechanisms
            .apply(g, &self.causal_graph, u)
            .map_err(ModelError::Scm)
    }

    /// Per-sample conditioning code: the causal code where `mask` is 1, the
    /// learned null token where it is 0. `mask_col` is `[B, 1]`; rows with
    /// mask 0 receive the null token bit-exactly.
    pub fn mix_cond<T: Scalar>(&self, g: &mut Graph<T>, z: Var, mask_col: Var) -> Var {
        let null = g.param(self.null_token);
        let null_row = g.reshape(null, &[1, self.cfg.code_width()]);
        let keep = g.mul(z, mask_col);
        let inv = g.affine(mask_col, -1.0, 1.0);
        let fill = g.mul(null_row, inv);
        g.add(keep, fill)
    }

    /// Denoiser output for a batch at (possibly distinct) integer timesteps.
    pub fn noise_estimate<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        x_t: Var,
        t: &[usize],
        cond: Var,
    ) -> Var {
        let feats = g.input(timestep_features::<T>(t, self.cfg.emb_dim));
        self.unet.forward(g, x_t, feats, cond)
    }

    // ---- inference wrappers ---------------------------------------------

    /// Posterior statistics as arrays: `(mu, logvar)`, each `[B, n * d_z]`.
    pub fn posterior_stats<T: Scalar>(
        &self,
        params: &Params<T>,
        x0: &ArrayD<T>,
    ) -> (ArrayD<T>, ArrayD<T>) {
        let mut g = Graph::new(params);
        let x = g.input(x0.clone());
        let (mu, logvar) = self.posterior(&mut g, x);
        (g.value(mu).clone(), g.value(logvar).clone())
    }

    /// Alignment-prior statistics as arrays: `(mu, var)`, each `[B, n * d_z]`.
    pub fn prior_stats<T: Scalar>(
        &self,
        params: &Params<T>,
        labels: &Array2<T>,
    ) -> (ArrayD<T>, ArrayD<T>) {
        let mut g = Graph::new(params);
        let y = g.input(labels.clone().into_dyn());
        let (mu, var) = self.prior.forward(&mut g, y);
        (g.value(mu).clone(), g.value(var).clone())
    }

    /// `z = f(u)` as arrays, with optional do-interventions: each `(i, c)`
    /// pins factor `i`'s block to `c` (`[B, d_z]`) and lets descendants react.
    pub fn push_forward<T: Scalar>(
        &self,
        params: &Params<T>,
        u: &ArrayD<T>,
        interventions: &[(usize, ArrayD<T>)],
    ) -> Result<ArrayD<T>, ModelError> {
        let mut g = Graph::new(params);
        let u_var = g.input(u.clone());
        let targets: Vec<(usize, Var)> = interventions
            .iter()
            .map(|(i, c)| (*i, g.input(c.clone())))
            .collect();
        let z = self
            .mechanisms
            .intervene(&mut g, &self.causal_graph, u_var, &targets)
            .map_err(ModelError::Scm)?;
        Ok(g.value(z).clone())
    }

    /// The null token broadcast to a `[B, n * d_z]` array.
    pub fn null_cond<T: Scalar>(&self, params: &Params<T>, batch: usize) -> ArrayD<T> {
        let token = params.get(self.null_token);
        let mut out = ArrayD::zeros(IxDyn(&[batch, self.cfg.code_width()]));
        for b in 0..batch {
            for (k, v) in token.iter().enumerate() {
                out[[b, k]] = *v;
            }
        }
        out
    }

    /// Denoiser output as an array; `cond = None` uses the null token for the
    /// whole batch (the unconditional branch).
    pub fn predict_noise_array<T: Scalar>(
        &self,
        params: &Params<T>,
        x_t: &ArrayD<T>,
        t: usize,
        cond: Option<&ArrayD<T>>,
    ) -> ArrayD<T> {
        let batch = x_t.shape()[0];
        let mut g = Graph::new(params);
        let x = g.input(x_t.clone());
        let cond_var = match cond {
            Some(c) => g.input(c.clone()),
            None => {
                let null = self.null_cond(params, batch);
                g.input(null)
            }
        };
        let ts = vec![t; batch];
        let eps = self.noise_estimate(&mut g, x, &ts, cond_var);
        g.value(eps).clone()
    }
}
