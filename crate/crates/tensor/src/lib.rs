//! Minimal tensor toolkit: reverse-mode autodiff on `ndarray`, the layer and
//! optimiser set used by the models in this workspace, deterministic RNG
//! streams, and a versioned binary container for named tensors.
//!
//! Everything is generic over [`Scalar`] so models train in `f32` and are
//! verified against finite differences in `f64` with the same code path.

mod adam;
mod container;
mod kernels;
pub mod nn;
pub mod rng;
mod scalar;
mod tape;

pub use adam::Adam;
pub use container::{Container, ContainerError};
pub use scalar::{Dtype, Scalar};
pub use tape::{broadcast_shape, Grads, Tape, Var};
