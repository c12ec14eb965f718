//! Image-grid emission: a single row of panels written as one PNG, plus a
//! TOML sidecar describing exactly what each panel shows.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Pixel gap between panels.
const GUTTER: u32 = 2;

/// One row of `[channels, H, W]` panels → an RGB PNG. Values are clamped to
/// [0, 1]; single-channel panels are replicated to gray.
pub fn write_grid_png(path: &Path, panels: &[ArrayD<f32>]) -> Result<(), CliError> {
    if panels.is_empty() {
        return Err(CliError::Parse("grid has no panels".into()));
    }
    let shape = panels[0].shape().to_vec();
    if shape.len() != 3 || !(shape[0] == 1 || shape[0] == 3) {
        return Err(CliError::Parse(format!(
            "grid panels must be [1|3, H, W], got {shape:?}"
        )));
    }
    for p in panels {
        if p.shape() != &shape[..] {
            return Err(CliError::Parse(format!(
                "all grid panels must share shape {shape:?}, got {:?}",
                p.shape()
            )));
        }
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let cols = panels.len() as u32;
    let width = cols * w as u32 + (cols - 1) * GUTTER;
    let mut img = RgbImage::from_pixel(width, h as u32, Rgb([255, 255, 255]));
    for (k, panel) in panels.iter().enumerate() {
        let x0 = k as u32 * (w as u32 + GUTTER);
        for y in 0..h {
            for x in 0..w {
                let px = |ch: usize| {
                    let v = panel[[ch, y, x]].clamp(0.0, 1.0);
                    (v * 255.0).round() as u8
                };
                let rgb = if c == 1 {
                    let g = px(0);
                    [g, g, g]
                } else {
                    [px(0), px(1), px(2)]
                };
                img.put_pixel(x0 + x as u32, y as u32, Rgb(rgb));
            }
        }
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path)
        .map_err(|e| CliError::Parse(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// What a generated grid contains, pane by pane.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSidecar {
    /// The checkpoint the images came from.
    pub checkpoint: String,
    /// Dataset sample index used as the factual image.
    pub sample_index: usize,
    /// Guidance weight used for decoding.
    pub omega: f64,
    /// Sampler levels used for inversion and generation.
    pub ddim_steps: usize,
    /// One label per panel, left to right.
    pub panels: Vec<String>,
    /// Raw-unit intervened values per panel (empty string when none).
    pub interventions: Vec<String>,
}

impl GridSidecar {
    pub fn save(&self, png_path: &Path) -> Result<PathBuf, CliError> {
        let path = sidecar_path(png_path);
        let text = toml::to_string_pretty(self)
            .map_err(|e| CliError::Parse(format!("sidecar serialization: {e}")))?;
        crate::rundir::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn load(png_path: &Path) -> Result<Self, CliError> {
        let path = sidecar_path(png_path);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("sidecar schema: {e}")))
    }
}

/// The metadata file that travels with a grid PNG.
pub fn sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("toml")
}
