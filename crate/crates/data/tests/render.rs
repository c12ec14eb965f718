//! Procedural renderers: identity/measurement checks on glyphs, scene
//! geometry for the pendulum, and brightness response for the circuit.

mod common;

use cda_data::{
    estimate_thickness, parse_idx_images, render_circuit_lite, render_morphomnist,
    render_pendulum, render_pendulum_layers, render_synthetic_glyph, sample_pendulum_scm,
    transform_glyph, DataError, GlyphSource,
};
use ndarray::Array2;

// ---- glyphs ----------------------------------------------------------------

#[test]
fn glyph_render_is_deterministic() {
    let a = render_morphomnist(&GlyphSource::Synthetic, 3, 2.5, 180.0, 28).unwrap();
    let b = render_morphomnist(&GlyphSource::Synthetic, 3, 2.5, 180.0, 28).unwrap();
    assert_eq!(a, b);
}

#[test]
fn glyph_transform_at_measured_parameters_is_identity() {
    // Re-rendering a glyph at its own measured thickness and intensity must
    // leave it untouched.
    let img = render_synthetic_glyph(4, 3.0, 28).unwrap();
    let t_hat = estimate_thickness(&img);
    let max_i = 255.0 * f64::from(img.iter().copied().fold(0.0f32, f32::max));
    let out = transform_glyph(&img, t_hat, max_i).unwrap();
    let mse = img
        .iter()
        .zip(out.iter())
        .map(|(a, b)| (f64::from(a - b)).powi(2))
        .sum::<f64>()
        / img.len() as f64;
    assert!(mse < 1e-3, "identity transform changed the glyph: MSE = {mse}");
}

#[test]
fn glyph_max_pixel_tracks_requested_intensity() {
    for i in [64.0, 100.0, 200.0, 255.0] {
        let img = render_morphomnist(&GlyphSource::Synthetic, 7, 2.5, i, 28).unwrap();
        let max8 = img.iter().copied().fold(f32::MIN, f32::max);
        let max8 = (f64::from(max8) + 1.0) * 0.5 * 255.0;
        assert!((max8 - i).abs() < 1e-3, "max pixel {max8} for requested {i}");
    }
}

#[test]
fn thicker_strokes_cover_strictly_more_pixels() {
    let mut prev = 0usize;
    for k in 0..7 {
        let t = 1.0 + 0.5 * k as f64;
        let img = render_morphomnist(&GlyphSource::Synthetic, 2, t, 255.0, 28).unwrap();
        let count = img.iter().filter(|&&v| v > -0.99).count();
        assert!(count > prev, "t = {t}: {count} vs {prev}");
        prev = count;
    }
}

#[test]
fn idx_archive_roundtrips_and_feeds_the_renderer() {
    // Serialize two synthetic glyphs as an IDX unsigned-byte archive.
    let glyphs: Vec<Array2<f32>> =
        vec![render_synthetic_glyph(0, 3.0, 28).unwrap(), render_synthetic_glyph(5, 3.0, 28).unwrap()];
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&(glyphs.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    for g in &glyphs {
        for v in g.iter() {
            bytes.push((v * 255.0).round() as u8);
        }
    }

    let parsed = parse_idx_images(&bytes).unwrap();
    assert_eq!(parsed.len(), 2);
    let max_err = parsed[0]
        .iter()
        .zip(glyphs[0].iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    assert!(max_err <= 0.5 / 255.0 + 1e-6, "quantization error {max_err}");

    // The ingested source renders through the morphological path.
    let source = GlyphSource::Images(parsed);
    let t_hat = estimate_thickness(&glyphs[1]);
    let out = render_morphomnist(&source, 1, t_hat, 200.0, 28).unwrap();
    let max8 = (f64::from(out.iter().copied().fold(f32::MIN, f32::max)) + 1.0) * 0.5 * 255.0;
    assert!((max8 - 200.0).abs() < 1e-3);
}

#[test]
fn idx_archive_rejects_garbage() {
    assert!(matches!(parse_idx_images(&[1, 2, 3]), Err(DataError::MissingSource(_))));
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    bytes.extend_from_slice(&[0; 12]);
    assert!(matches!(parse_idx_images(&bytes), Err(DataError::MissingSource(_))));
    // Right magic, truncated payload.
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&2u32.to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    bytes.extend_from_slice(&[0; 100]);
    assert!(matches!(parse_idx_images(&bytes), Err(DataError::MissingSource(_))));
}

// ---- pendulum --------------------------------------------------------------

#[test]
fn pendulum_render_is_deterministic() {
    let (y3, y4) = sample_pendulum_scm(16.0, 113.0).unwrap();
    let a = render_pendulum(16.0, 113.0, y3, y4, 64).unwrap();
    let b = render_pendulum(16.0, 113.0, y3, y4, 64).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.shape(), &[3, 64, 64]);
    for v in a.iter() {
        assert!((-1.0..=1.0).contains(v));
    }
}

#[test]
fn negating_the_angle_mirrors_the_rod() {
    // The world window is symmetric about the pivot column, so flipping the
    // angle's sign mirrors the rod's coverage field left-right. The shadow is
    // not mirrored (the light stays put), which is exactly why the scene
    // carries causal information.
    let y2 = 85.0;
    for y1 in [10.0, 25.0, 40.0] {
        let (y3p, y4p) = sample_pendulum_scm(y1, y2).unwrap();
        let (y3n, y4n) = sample_pendulum_scm(-y1, y2).unwrap();
        let pos = render_pendulum_layers(y1, y2, y3p, y4p, 64).unwrap();
        let neg = render_pendulum_layers(-y1, y2, y3n, y4n, 64).unwrap();
        let mut max_err = 0.0f32;
        for r in 0..64 {
            for c in 0..64 {
                max_err = max_err.max((pos.rod[[r, c]] - neg.rod[[r, 63 - c]]).abs());
            }
        }
        assert!(max_err < 1e-5, "rod mirror error {max_err} at y1 = {y1}");
        assert_ne!(pos.shadow, neg.shadow, "shadow must move when the rod swings");
    }
}

#[test]
fn shadow_pixel_run_is_linear_in_shadow_length() {
    // Sweep the rod with the light fixed; the rendered shadow's pixel run
    // should scale linearly with the shadow-length factor.
    let y2 = 80.0;
    let res = 64usize;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 0..9 {
        let y1 = -40.0 + 10.0 * k as f64;
        let (y3, y4) = sample_pendulum_scm(y1, y2).unwrap();
        let layers = render_pendulum_layers(y1, y2, y3, y4, res).unwrap();
        let mut run = 0usize;
        for c in 0..res {
            let col_max = (0..res).map(|r| layers.shadow[[r, c]]).fold(0.0f32, f32::max);
            if col_max > 0.5 {
                run += 1;
            }
        }
        xs.push(y3);
        ys.push(run as f64);
    }
    let r2 = common::linear_fit_r2(&xs, &ys);
    assert!(r2 > 0.99, "shadow length fit R² = {r2}; lengths {xs:?}, runs {ys:?}");
}

#[test]
fn pendulum_rejects_out_of_range_factors() {
    assert!(matches!(render_pendulum(80.0, 100.0, 3.0, 10.0, 64), Err(DataError::Param(_))));
    assert!(matches!(render_pendulum(0.0, 200.0, 3.0, 10.0, 64), Err(DataError::Param(_))));
    assert!(matches!(render_pendulum(0.0, 100.0, 3.0, 10.0, 4), Err(DataError::Param(_))));
}

// ---- circuit ---------------------------------------------------------------

#[test]
fn dark_lights_render_at_background_level() {
    let img = render_circuit_lite(0.1, 0.0, 0.0, 0.0, 64).unwrap();
    // Disc centres (away from the arm indicator) must sit at the background.
    for (cx, cy) in [(0.25, 0.4), (0.5, 0.4), (0.75, 0.4)] {
        let c = (cx * 64.0) as usize;
        let r = ((1.0 - cy) * 64.0) as usize;
        for ch in 0..3 {
            assert_eq!(img[[ch, r, c]], -1.0, "channel {ch} at disc ({cx}, {cy})");
        }
    }
}

#[test]
fn red_channel_mean_is_monotone_in_red_intensity() {
    let mut prev = f64::NEG_INFINITY;
    for k in 0..5 {
        let y4 = 0.25 * k as f64;
        let img = render_circuit_lite(0.1, 0.3, 0.3, y4, 64).unwrap();
        let mean: f64 =
            img.index_axis(ndarray::Axis(0), 0).iter().map(|&v| f64::from(v)).sum::<f64>();
        assert!(mean > prev, "red mean not increasing at y4 = {y4}");
        prev = mean;
    }
}

#[test]
fn circuit_render_is_deterministic_and_validates() {
    let a = render_circuit_lite(0.6, 0.2, 0.8, 0.5, 64).unwrap();
    let b = render_circuit_lite(0.6, 0.2, 0.8, 0.5, 64).unwrap();
    assert_eq!(a, b);
    assert!(matches!(render_circuit_lite(1.5, 0.2, 0.8, 0.5, 64), Err(DataError::Param(_))));
    assert!(matches!(render_circuit_lite(0.5, -0.1, 0.8, 0.5, 64), Err(DataError::Param(_))));
}
