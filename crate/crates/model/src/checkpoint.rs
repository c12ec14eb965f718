//! Checkpointing: everything needed to continue training exactly.
//!
//! A checkpoint is one tensor container whose metadata string is a TOML
//! snapshot (schema version, step, root seed, model and trainer configs, and
//! the causal graph in its text form) and whose tensors are every model
//! parameter plus both optimiser moment buffers, all keyed by parameter name.
//! Loading rebuilds the model from the snapshot, then overwrites every
//! parameter and moment by name — so a checkpoint from a different
//! architecture, schema version, or element width fails loudly instead of
//! half-loading.

use std::path::Path;

use cda_scm::CausalGraph;
use cda_tensor::nn::Params;
use cda_tensor::rng::derive_rng;
use cda_tensor::{Adam, Container, Scalar};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, TrainConfig};
use crate::model::CausalDiffAe;
use crate::ModelError;

/// Schema version of the checkpoint metadata; bump on any layout change.
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointMeta {
    version: u32,
    step: u64,
    opt_step: u64,
    seed: u64,
    model: ModelConfig,
    train: TrainConfig,
    graph: String,
}

/// A loaded checkpoint, ready to continue training or to sample from.
pub struct Checkpoint<T: Scalar> {
    pub model: CausalDiffAe,
    pub params: Params<T>,
    pub opt: Adam<T>,
    pub step: u64,
    pub seed: u64,
    pub train: TrainConfig,
}

/// Writes the full training state to `path` (atomically).
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    model: &CausalDiffAe,
    params: &Params<T>,
    opt: &Adam<T>,
    step: u64,
    seed: u64,
    train: &TrainConfig,
) -> Result<(), ModelError> {
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        step,
        opt_step: opt.step_count(),
        seed,
        model: model.cfg().clone(),
        train: train.clone(),
        graph: model.causal_graph().to_text(),
    };
    let meta_text = toml::to_string(&meta)
        .map_err(|e| ModelError::Checkpoint(format!("could not serialise metadata: {e}")))?;
    let mut container = Container::new(meta_text);
    for (name, value) in params.iter() {
        container.insert(&format!("param.{name}"), value);
    }
    let (m, v) = opt.moments();
    for ((name, _), (mi, vi)) in params.iter().zip(m.iter().zip(v.iter())) {
        container.insert(&format!("adam.m.{name}"), mi);
        container.insert(&format!("adam.v.{name}"), vi);
    }
    container.save(path).map_err(ModelError::Container)
}

/// Reads a checkpoint back into a ready-to-train state.
pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, ModelError> {
    let container = Container::load(path).map_err(ModelError::Container)?;
    let meta: CheckpointMeta = toml::from_str(&container.meta)
        .map_err(|e| ModelError::Checkpoint(format!("bad metadata: {e}")))?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint schema version {} (this build reads {})",
            meta.version, CHECKPOINT_VERSION
        )));
    }
    let graph = CausalGraph::from_text(&meta.graph)
        .map_err(|e| ModelError::Checkpoint(format!("bad causal graph: {e}")))?;

    // Rebuild the architecture; every freshly initialised value is replaced
    // below, so the init stream only has to exist, not match.
    let mut params = Params::new();
    let mut init_rng = derive_rng(meta.seed, "init", 0);
    let model = CausalDiffAe::new(meta.model.clone(), graph, &mut params, &mut init_rng)?;

    let mut restored: Vec<ArrayD<T>> = Vec::with_capacity(params.len());
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    for (name, value) in params.iter() {
        let stored = container
            .get::<T>(&format!("param.{name}"))
            .map_err(ModelError::Container)?;
        if stored.shape() != value.shape() {
            return Err(ModelError::Checkpoint(format!(
                "parameter {name} has shape {:?} in the checkpoint but {:?} in the rebuilt model",
                stored.shape(),
                value.shape()
            )));
        }
        restored.push(stored);
        m.push(container.get::<T>(&format!("adam.m.{name}")).map_err(ModelError::Container)?);
        v.push(container.get::<T>(&format!("adam.v.{name}")).map_err(ModelError::Container)?);
    }
    let expected = 3 * params.len();
    if container.len() != expected {
        return Err(ModelError::Checkpoint(format!(
            "checkpoint holds {} tensors, the rebuilt model needs exactly {expected}",
            container.len()
        )));
    }
    let names: Vec<String> = params.iter().map(|(n, _)| n.to_string()).collect();
    for (name, value) in names.iter().zip(restored) {
        let id = params.id_of(name).expect("name from the store itself");
        params.set(id, value);
    }
    let opt = Adam::from_state(&params, meta.train.lr, meta.train.clip_norm, meta.opt_step, m, v);
    Ok(Checkpoint { model, params, opt, step: meta.step, seed: meta.seed, train: meta.train })
}
