//! Synthetic causal-image datasets.
//!
//! Three families, each defined by a small ground-truth structural causal
//! model over interpretable factors plus a deterministic procedural renderer:
//!
//! * `morphomnist` — stroke glyphs with thickness → intensity.
//! * `pendulum`    — a lit pendulum; angle and light position determine the
//!   shadow's length and position.
//! * `circuit-lite` — a robot arm over three lights; arm position presses
//!   buttons, button presses and light intensities feed the red light.
//!
//! Labels are sampled from the ground-truth SCM, normalized per factor to
//! (−1, 1), and persisted together with the rendered images in a binary
//! tensor container plus a human-readable metadata sidecar.

mod build;
mod circuit;
mod counterfactuals;
mod dataset;
mod factors;
mod morphomnist;
mod pendulum;

use std::fmt;
use std::str::FromStr;

pub use build::{build_dataset, causal_graph, factor_specs, paper_scale, BuildConfig};
pub use counterfactuals::counterfactual_labels;
#[doc(hidden)]
pub use counterfactuals::light_quantile;
pub use circuit::{
    circuit_intensities, pressed_buttons, render_circuit_lite, sample_circuit_scm, CircuitSample,
    BUTTON_POSITIONS, BUTTON_WIDTH,
};
pub use dataset::LabeledDataset;
pub use factors::FactorSpec;
pub use morphomnist::{
    estimate_thickness, glyph_bank_len, parse_idx_images, render_morphomnist,
    render_synthetic_glyph, sample_morphomnist_scm, transform_glyph, GlyphSource,
};
pub use pendulum::{render_pendulum, render_pendulum_layers, sample_pendulum_scm, PendulumLayers};

/// Errors produced while generating, rendering, or persisting datasets.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("unknown dataset name {0:?} (expected morphomnist, pendulum, or circuit-lite)")]
    UnknownDataset(String),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("light angle too close to horizontal: |tan φ| = {0:e} < 1e-9")]
    Singularity(f64),
    #[error("no source glyph available: {0}")]
    MissingSource(String),
    #[error("malformed metadata sidecar: {0}")]
    Metadata(String),
    #[error(transparent)]
    Container(#[from] cda_tensor::ContainerError),
    #[error(transparent)]
    Graph(#[from] cda_scm::GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetName {
    MorphoMnist,
    Pendulum,
    CircuitLite,
}

impl DatasetName {
    pub const ALL: [DatasetName; 3] =
        [DatasetName::MorphoMnist, DatasetName::Pendulum, DatasetName::CircuitLite];

    /// Number of causal factors (label columns).
    pub fn n_factors(self) -> usize {
        match self {
            DatasetName::MorphoMnist => 2,
            DatasetName::Pendulum => 4,
            DatasetName::CircuitLite => 4,
        }
    }

    /// Image channel count.
    pub fn channels(self) -> usize {
        match self {
            DatasetName::MorphoMnist => 1,
            DatasetName::Pendulum | DatasetName::CircuitLite => 3,
        }
    }

    /// Default image side length.
    pub fn default_resolution(self) -> usize {
        match self {
            DatasetName::MorphoMnist => 28,
            DatasetName::Pendulum | DatasetName::CircuitLite => 64,
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DatasetName::MorphoMnist => "morphomnist",
            DatasetName::Pendulum => "pendulum",
            DatasetName::CircuitLite => "circuit-lite",
        };
        f.write_str(s)
    }
}

impl FromStr for DatasetName {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self, DataError> {
        match s {
            "morphomnist" => Ok(DatasetName::MorphoMnist),
            "pendulum" => Ok(DatasetName::Pendulum),
            "circuit-lite" => Ok(DatasetName::CircuitLite),
            other => Err(DataError::UnknownDataset(other.to_string())),
        }
    }
}
