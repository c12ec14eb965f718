use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::DataError;

/// Button centers along the track, in arm coordinates, ordered red, green,
/// blue. A button is pressed when the arm is within [`BUTTON_WIDTH`] of it.
pub const BUTTON_POSITIONS: [f64; 3] = [0.25, 0.5, 0.75];
/// Press threshold on |arm − button|.
pub const BUTTON_WIDTH: f64 = 0.1;

/// Which buttons the arm at position `y1` presses: `(red, green, blue)`.
pub fn pressed_buttons(y1: f64) -> (bool, bool, bool) {
    let hit = |pos: f64| (y1 - pos).abs() < BUTTON_WIDTH;
    (hit(BUTTON_POSITIONS[0]), hit(BUTTON_POSITIONS[1]), hit(BUTTON_POSITIONS[2]))
}

/// Mean intensities `(v_R, v_G, v_B)` of the three lights given the pressed
/// buttons and the already-sampled blue/green intensities. The red light
/// also listens to the other two lights; everything saturates into
/// `[0.2, 0.8]`.
pub fn circuit_intensities(
    pressed: (bool, bool, bool),
    y2_blue: f64,
    y3_green: f64,
) -> (f64, f64, f64) {
    let b = |on: bool| if on { 1.0 } else { 0.0 };
    let v_r = 0.2 + 0.6 * (y2_blue + y3_green + b(pressed.0)).clamp(0.0, 1.0);
    let v_g = 0.2 + 0.6 * b(pressed.1);
    let v_b = 0.2 + 0.6 * b(pressed.2);
    (v_r, v_g, v_b)
}

/// One draw from the circuit's generative process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircuitSample {
    /// Arm position, uniform on [0, 1].
    pub y1: f64,
    /// Blue light intensity.
    pub y2: f64,
    /// Green light intensity.
    pub y3: f64,
    /// Red light intensity.
    pub y4: f64,
}

/// Sample the four factors in dependency order: arm, then button presses,
/// then the blue and green lights, then the red light (which responds to
/// blue + green + its button). Intensities are Beta draws concentrated
/// around the mean intensity `v` via `Beta(5v, 5(1−v))`.
pub fn sample_circuit_scm(rng: &mut ChaCha8Rng) -> CircuitSample {
    let y1: f64 = rng.gen_range(0.0..1.0);
    let pressed = pressed_buttons(y1);
    let beta_draw = |v: f64, rng: &mut ChaCha8Rng| -> f64 {
        let alpha = 5.0 * v;
        let beta = 5.0 * (1.0 - v);
        Beta::new(alpha, beta).expect("v in [0.2, 0.8] keeps both parameters positive").sample(rng)
    };
    // Blue and green need only the button state…
    let (_, v_g, v_b) = circuit_intensities(pressed, 0.0, 0.0);
    let y2 = beta_draw(v_b, rng);
    let y3 = beta_draw(v_g, rng);
    // …while red reads the realized intensities.
    let (v_r, _, _) = circuit_intensities(pressed, y2, y3);
    let y4 = beta_draw(v_r, rng);
    CircuitSample { y1, y2, y3, y4 }
}

/// Disc centers for the red, green, and blue lights in the unit square.
const DISC_CENTERS: [(f64, f64); 3] = [(0.25, 0.40), (0.50, 0.40), (0.75, 0.40)];
const DISC_RADIUS: f64 = 0.11;
const ARM_Y: f64 = 0.85;
const ARM_HALF_W: f64 = 0.05;
const ARM_HALF_H: f64 = 0.07;

/// Render the scene to RGB in `[−1, 1]`, shape `[3, res, res]`: an arm
/// indicator at horizontal position `y1` near the top and three discs whose
/// channel brightness equals the light intensities (red = `y4`, green =
/// `y3`, blue = `y2`). Background is black (−1). Deterministic.
pub fn render_circuit_lite(
    y1: f64,
    y2: f64,
    y3: f64,
    y4: f64,
    res: usize,
) -> Result<Array3<f32>, DataError> {
    for (name, v) in [("y1", y1), ("y2", y2), ("y3", y3), ("y4", y4)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(DataError::Param(format!("{name} = {v} outside [0, 1]")));
        }
    }
    if res < 16 {
        return Err(DataError::Param(format!("circuit resolution too small: {res}")));
    }
    let px = 1.0 / res as f64;
    let edge = |signed: f64| (signed / px + 0.5).clamp(0.0, 1.0) as f32;
    // Disc brightness per channel: red disc lights channel 0 with y4, etc.
    let disc_value = [y4 as f32, y3 as f32, y2 as f32];

    let mut img = Array3::<f32>::zeros((3, res, res));
    for r in 0..res {
        let y = 1.0 - (r as f64 + 0.5) * px;
        for c in 0..res {
            let x = (c as f64 + 0.5) * px;
            let mut rgb = [0.0f32; 3];

            for (k, &(cx, cy)) in DISC_CENTERS.iter().enumerate() {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                let cov = edge(DISC_RADIUS - d);
                rgb[k] += cov * disc_value[k];
            }

            // Arm indicator: a small white block at (y1, ARM_Y).
            let in_x = edge(ARM_HALF_W - (x - y1).abs());
            let in_y = edge(ARM_HALF_H - (y - ARM_Y).abs());
            let arm = in_x.min(in_y);
            for v in &mut rgb {
                *v = v.max(arm * 0.9);
            }

            for ch in 0..3 {
                img[[ch, r, c]] = 2.0 * rgb[ch].clamp(0.0, 1.0) - 1.0;
            }
        }
    }
    Ok(img)
}
