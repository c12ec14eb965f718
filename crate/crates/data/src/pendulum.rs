use ndarray::{Array2, Array3};

use crate::DataError;

/// Structural assignments for the pendulum scene.
///
/// `y1` is the rod angle and `y2` the light angle, both in degree-scaled
/// units (`θ = y1·π/200`, `φ = y2·π/200`). The shadow's length `y3` and
/// center `y4` follow from projecting the rod onto the ground along parallel
/// light rays: the rod hangs from a pivot at height 11, has length 9.5, and
/// a ray through a point `(px, py)` lands at `px − py/tan φ`.
pub fn sample_pendulum_scm(y1: f64, y2: f64) -> Result<(f64, f64), DataError> {
    if !(y1.is_finite() && y2.is_finite()) {
        return Err(DataError::Param(format!("factors must be finite, got ({y1}, {y2})")));
    }
    let theta = y1 * std::f64::consts::PI / 200.0;
    let phi = y2 * std::f64::consts::PI / 200.0;
    let tan_phi = phi.tan();
    if tan_phi.abs() < 1e-9 {
        return Err(DataError::Singularity(tan_phi.abs()));
    }
    let inv = 1.0 / tan_phi;
    let y3 = (9.5 * theta.cos() * inv + 9.5 * theta.sin()).abs().max(3.0);
    let y4 = (-11.0 + 4.75 * theta.cos()) * inv + (10.0 + 4.75 * theta.sin());
    Ok((y3, y4))
}

/// Separate anti-aliased coverage fields for the three scene elements,
/// each in `[0, 1]` with shape `[res, res]`.
#[derive(Debug, Clone)]
pub struct PendulumLayers {
    pub rod: Array2<f32>,
    pub light: Array2<f32>,
    pub shadow: Array2<f32>,
}

/// World window: x ∈ [−4, 24] (symmetric about the pivot column x = 10),
/// y ∈ [−2, 26]; ground at y = 0, pivot at (10, 11).
const WIN_X0: f64 = -4.0;
const WIN_Y1: f64 = 26.0;
const WIN_SIDE: f64 = 28.0;
const PIVOT: (f64, f64) = (10.0, 11.0);
const ROD_LEN: f64 = 9.5;
const ROD_HALF_WIDTH: f64 = 0.45;
const LIGHT_ORBIT: f64 = 9.0;
const LIGHT_RADIUS: f64 = 1.6;
const SHADOW_TOP: f64 = 1.0;

fn check_ranges(y1: f64, y2: f64, y3: f64, y4: f64) -> Result<(), DataError> {
    if !(-50.0..=50.0).contains(&y1) {
        return Err(DataError::Param(format!("rod angle {y1} outside [−50, 50]")));
    }
    if !(55.0..=150.0).contains(&y2) {
        return Err(DataError::Param(format!("light angle {y2} outside [55, 150]")));
    }
    if !(0.0..=20.0).contains(&y3) {
        return Err(DataError::Param(format!("shadow length {y3} outside [0, 20]")));
    }
    if !(-5.0..=25.0).contains(&y4) {
        return Err(DataError::Param(format!("shadow position {y4} outside [−5, 25]")));
    }
    Ok(())
}

/// Render the scene's layers at `res`×`res`. Deterministic in its inputs.
pub fn render_pendulum_layers(
    y1: f64,
    y2: f64,
    y3: f64,
    y4: f64,
    res: usize,
) -> Result<PendulumLayers, DataError> {
    check_ranges(y1, y2, y3, y4)?;
    if res < 16 {
        return Err(DataError::Param(format!("pendulum resolution too small: {res}")));
    }
    let theta = y1 * std::f64::consts::PI / 200.0;
    let phi = y2 * std::f64::consts::PI / 200.0;
    let px = WIN_SIDE / res as f64;

    let tip = (PIVOT.0 + ROD_LEN * theta.sin(), PIVOT.1 - ROD_LEN * theta.cos());
    let light_c = (PIVOT.0 + LIGHT_ORBIT * phi.cos(), PIVOT.1 + LIGHT_ORBIT * phi.sin());
    let (sh_lo, sh_hi) = (y4 - y3 * 0.5, y4 + y3 * 0.5);

    let edge = |signed: f64| (signed / px + 0.5).clamp(0.0, 1.0) as f32;

    let mut rod = Array2::<f32>::zeros((res, res));
    let mut light = Array2::<f32>::zeros((res, res));
    let mut shadow = Array2::<f32>::zeros((res, res));
    for r in 0..res {
        let y = WIN_Y1 - (r as f64 + 0.5) * px;
        for c in 0..res {
            let x = WIN_X0 + (c as f64 + 0.5) * px;

            // Rod: distance to the pivot→tip segment.
            let (ex, ey) = (tip.0 - PIVOT.0, tip.1 - PIVOT.1);
            let (dx, dy) = (x - PIVOT.0, y - PIVOT.1);
            let t = ((dx * ex + dy * ey) / (ex * ex + ey * ey)).clamp(0.0, 1.0);
            let (cx, cy) = (dx - t * ex, dy - t * ey);
            let d_rod = (cx * cx + cy * cy).sqrt();
            rod[[r, c]] = edge(ROD_HALF_WIDTH - d_rod);

            // Light disc.
            let (lx, ly) = (x - light_c.0, y - light_c.1);
            let d_light = (lx * lx + ly * ly).sqrt();
            light[[r, c]] = edge(LIGHT_RADIUS - d_light);

            // Shadow: an axis-aligned strip on the ground.
            let in_y = edge(y - 0.0).min(edge(SHADOW_TOP - y));
            let in_x = edge(x - sh_lo).min(edge(sh_hi - x));
            shadow[[r, c]] = in_y.min(in_x);
        }
    }
    Ok(PendulumLayers { rod, light, shadow })
}

/// Composite the scene to an RGB image in `[−1, 1]`, shape `[3, res, res]`.
pub fn render_pendulum(
    y1: f64,
    y2: f64,
    y3: f64,
    y4: f64,
    res: usize,
) -> Result<Array3<f32>, DataError> {
    let layers = render_pendulum_layers(y1, y2, y3, y4, res)?;
    const BG: [f32; 3] = [1.0, 1.0, 1.0];
    const LIGHT_COLOR: [f32; 3] = [1.0, 0.85, 0.1];
    const ROD_COLOR: [f32; 3] = [0.12, 0.12, 0.38];
    const SHADOW_COLOR: [f32; 3] = [0.45, 0.45, 0.45];
    let mut img = Array3::<f32>::zeros((3, res, res));
    for r in 0..res {
        for c in 0..res {
            for ch in 0..3 {
                let mut v = BG[ch];
                v = v + layers.light[[r, c]] * (LIGHT_COLOR[ch] - v);
                v = v + layers.rod[[r, c]] * (ROD_COLOR[ch] - v);
                v = v + layers.shadow[[r, c]] * (SHADOW_COLOR[ch] - v);
                img[[ch, r, c]] = 2.0 * v - 1.0;
            }
        }
    }
    Ok(img)
}
