//! Diffusion process plumbing: noise schedules, the closed-form forward
//! process, and deterministic DDIM sampling/encoding.
//!
//! Everything here is pure arithmetic on arrays — networks enter only through
//! the [`NoisePredictor`] trait, so the loops can be exercised with oracle
//! closures in tests and with the real conditional UNet in training.

mod schedule;
mod sampler;

pub use sampler::{
    ddim_encode_loop, ddim_sample_loop, ddim_step, forward_chain_step, predict_x0, q_sample,
    NoisePredictor, SamplerPlan,
};
pub use schedule::{NoiseSchedule, ScheduleKind};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("bad schedule parameter: {0}")]
    BadParam(String),
    #[error("timestep {t} out of range for a {t_count}-step schedule")]
    BadTime { t: isize, t_count: usize },
    #[error("shape mismatch: {context} expected {expected:?}, got {got:?}")]
    Shape { context: &'static str, expected: Vec<usize>, got: Vec<usize> },
    #[error("bad sampler plan: {0}")]
    BadPlan(String),
}
