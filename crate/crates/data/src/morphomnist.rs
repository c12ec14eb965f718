use ndarray::Array2;

use crate::DataError;

/// Structural assignments for the glyph factors.
///
/// Thickness is an exogenous shift; intensity responds to thickness through a
/// saturating nonlinearity (thicker strokes are drawn brighter), plus its own
/// exogenous noise. Intensity is in 8-bit units and lives in (64, 255).
pub fn sample_morphomnist_scm(u_t: f64, u_i: f64) -> (f64, f64) {
    let t = 0.5 + u_t;
    let i = 191.0 * sigmoid(0.5 * u_i + 2.0 * t - 5.0) + 64.0;
    (t, i)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---------------------------------------------------------------------------
// Glyph sources
// ---------------------------------------------------------------------------

/// Where stroke glyphs come from: the built-in procedural bank (self-contained,
/// used by dataset generation) or grayscale images ingested from an IDX archive.
#[derive(Debug, Clone)]
pub enum GlyphSource {
    /// Procedural stroke skeletons rendered with an exact distance field.
    Synthetic,
    /// Ingested glyph images, each in `[0, 1]`, row-major `[H, W]`.
    Images(Vec<Array2<f32>>),
}

impl GlyphSource {
    pub fn len(&self) -> usize {
        match self {
            GlyphSource::Synthetic => glyph_bank_len(),
            GlyphSource::Images(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Number of distinct skeletons in the built-in bank.
pub fn glyph_bank_len() -> usize {
    10
}

/// Parse an IDX3 unsigned-byte image archive (the classic digit format:
/// magic `0x00000803`, then count/rows/cols as big-endian u32, then pixels).
/// Pixels are scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Array2<f32>>, DataError> {
    if bytes.len() < 16 {
        return Err(DataError::MissingSource("IDX archive shorter than its header".into()));
    }
    let be = |o: usize| u32::from_be_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);
    if be(0) != 0x0000_0803 {
        return Err(DataError::MissingSource(format!(
            "bad IDX magic {:#010x} (want 0x00000803)",
            be(0)
        )));
    }
    let (n, rows, cols) = (be(4) as usize, be(8) as usize, be(12) as usize);
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(DataError::MissingSource(format!(
            "IDX archive truncated: need {need} bytes, have {}",
            bytes.len()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let base = 16 + k * rows * cols;
        let img = Array2::from_shape_fn((rows, cols), |(r, c)| {
            f32::from(bytes[base + r * cols + c]) / 255.0
        });
        out.push(img);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Procedural skeletons
// ---------------------------------------------------------------------------

/// A skeleton is a set of open polylines in a 28×28 world box, y pointing up.
fn skeleton(digit: usize) -> Vec<Vec<(f64, f64)>> {
    let circle = |cx: f64, cy: f64, rx: f64, ry: f64| -> Vec<(f64, f64)> {
        let n = 48;
        (0..=n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (cx + rx * a.cos(), cy + ry * a.sin())
            })
            .collect()
    };
    // Right half of a circle, from the top point down to the bottom point.
    let right_arc = |cx: f64, cy: f64, r: f64| -> Vec<(f64, f64)> {
        let n = 24;
        (0..=n)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_2 - std::f64::consts::PI * k as f64 / n as f64;
                (cx + r * a.cos(), cy + r * a.sin())
            })
            .collect()
    };
    match digit {
        0 => vec![circle(14.0, 14.0, 5.0, 8.0)],
        1 => vec![vec![(14.0, 22.0), (14.0, 6.0)], vec![(11.0, 19.0), (14.0, 22.0)]],
        2 => {
            let mut top: Vec<(f64, f64)> = (0..=24)
                .map(|k| {
                    let a = std::f64::consts::PI - std::f64::consts::PI * k as f64 / 24.0;
                    (14.0 + 5.0 * a.cos(), 17.0 + 5.0 * a.sin())
                })
                .collect();
            top.push((9.0, 6.0));
            top.push((19.0, 6.0));
            vec![top]
        }
        3 => vec![right_arc(14.0, 18.0, 4.5), right_arc(14.0, 9.0, 4.5)],
        4 => vec![vec![(9.0, 22.0), (9.0, 13.0), (19.0, 13.0)], vec![(16.0, 22.0), (16.0, 6.0)]],
        5 => {
            let mut s = vec![(18.0, 22.0), (10.0, 22.0), (10.0, 14.5)];
            s.extend(right_arc(13.0, 10.0, 4.5));
            s.push((10.0, 6.0));
            vec![s]
        }
        6 => vec![
            vec![(17.0, 23.0), (12.0, 18.0), (9.6, 12.0)],
            circle(14.0, 9.5, 4.5, 4.5),
        ],
        7 => vec![vec![(9.0, 22.0), (19.0, 22.0), (12.0, 6.0)]],
        8 => vec![circle(14.0, 18.0, 4.0, 4.0), circle(14.0, 8.5, 5.0, 5.0)],
        9 => vec![
            circle(14.0, 17.5, 4.5, 4.5),
            vec![(18.5, 17.5), (17.5, 11.0), (14.0, 5.5)],
        ],
        other => skeleton(other % 10),
    }
}

fn dist_to_segment(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let (dx, dy) = (px - a.0, py - a.1);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 { ((dx * ex + dy * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (dx - t * ex, dy - t * ey);
    (cx * cx + cy * cy).sqrt()
}

/// Render a skeleton from the built-in bank as a stroke of exact thickness
/// `t` (world units = pixels at 28×28). Returns coverage in `[0, 1]`.
pub fn render_synthetic_glyph(digit: usize, t: f64, res: usize) -> Result<Array2<f32>, DataError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(DataError::Param(format!("stroke thickness must be positive, got {t}")));
    }
    if res < 8 {
        return Err(DataError::Param(format!("glyph resolution too small: {res}")));
    }
    let strokes = skeleton(digit % glyph_bank_len());
    let px = 28.0 / res as f64;
    let half = t * 0.5;
    let img = Array2::from_shape_fn((res, res), |(r, c)| {
        let x = (c as f64 + 0.5) * px;
        let y = 28.0 - (r as f64 + 0.5) * px;
        let mut d = f64::INFINITY;
        for poly in &strokes {
            for w in poly.windows(2) {
                d = d.min(dist_to_segment(x, y, w[0], w[1]));
            }
        }
        (((half - d) / px + 0.5).clamp(0.0, 1.0)) as f32
    });
    Ok(img)
}

// ---------------------------------------------------------------------------
// Morphological transform for ingested glyphs
// ---------------------------------------------------------------------------

const FOREGROUND: f32 = 0.5;

/// Mean stroke width in pixels, estimated from the city-block distance of
/// foreground pixels to the background. Returns 0 for an empty image.
pub fn estimate_thickness(img: &Array2<f32>) -> f64 {
    let (h, w) = img.dim();
    let mut dist = Array2::<i32>::from_elem((h, w), i32::MAX);
    let mut queue = std::collections::VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if img[[r, c]] < FOREGROUND {
                dist[[r, c]] = 0;
                queue.push_back((r, c));
            }
        }
    }
    // Border outside the image is background too.
    for r in 0..h {
        for c in [0, w - 1] {
            if dist[[r, c]] != 0 {
                dist[[r, c]] = 1;
                queue.push_back((r, c));
            }
        }
    }
    for c in 0..w {
        for r in [0, h - 1] {
            if dist[[r, c]] != 0 {
                dist[[r, c]] = 1;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let d = dist[[r, c]];
        let push = |rr: usize, cc: usize, dist: &mut Array2<i32>, q: &mut std::collections::VecDeque<(usize, usize)>| {
            if dist[[rr, cc]] > d + 1 {
                dist[[rr, cc]] = d + 1;
                q.push_back((rr, cc));
            }
        };
        if r > 0 {
            push(r - 1, c, &mut dist, &mut queue);
        }
        if r + 1 < h {
            push(r + 1, c, &mut dist, &mut queue);
        }
        if c > 0 {
            push(r, c - 1, &mut dist, &mut queue);
        }
        if c + 1 < w {
            push(r, c + 1, &mut dist, &mut queue);
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in 0..h {
        for c in 0..w {
            if img[[r, c]] >= FOREGROUND {
                sum += f64::from(dist[[r, c]]);
                count += 1;
            }
        }
    }
    if count == 0 {
        return 0.0;
    }
    // A strip of width t has mean interior distance ≈ t/4 + 1/2.
    (4.0 * sum / count as f64 - 2.0).max(1.0)
}

fn morph_step(img: &Array2<f32>, dilate: bool) -> Array2<f32> {
    let (h, w) = img.dim();
    Array2::from_shape_fn((h, w), |(r, c)| {
        let mut v = img[[r, c]];
        let mut consider = |rr: usize, cc: usize| {
            let u = img[[rr, cc]];
            v = if dilate { v.max(u) } else { v.min(u) };
        };
        if r > 0 {
            consider(r - 1, c);
        }
        if r + 1 < h {
            consider(r + 1, c);
        }
        if c > 0 {
            consider(r, c - 1);
        }
        if c + 1 < w {
            consider(r, c + 1);
        }
        if dilate {
            v
        } else {
            // Erosion treats out-of-frame as background.
            if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
                0.0
            } else {
                v
            }
        }
    })
}

/// Re-thicken a glyph image to stroke width `t` (integer dilation/erosion
/// rounds against the estimated current width), then rescale so its brightest
/// pixel equals `i` in 8-bit units. Input and output are coverage in `[0, 1]`.
pub fn transform_glyph(img: &Array2<f32>, t: f64, i: f64) -> Result<Array2<f32>, DataError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(DataError::Param(format!("stroke thickness must be positive, got {t}")));
    }
    if !(0.0..=255.0).contains(&i) {
        return Err(DataError::Param(format!("intensity must be in [0, 255], got {i}")));
    }
    let current = estimate_thickness(img);
    if current == 0.0 {
        return Err(DataError::MissingSource("glyph image has no foreground pixels".into()));
    }
    // One dilation round grows the stroke by one pixel on each side.
    let rounds = ((t - current) / 2.0).round() as i64;
    let mut out = img.clone();
    for _ in 0..rounds.unsigned_abs() {
        out = morph_step(&out, rounds > 0);
    }
    let max = out.iter().copied().fold(0.0f32, f32::max);
    if max <= 0.0 {
        return Err(DataError::MissingSource("glyph eroded away entirely".into()));
    }
    let scale = (i / 255.0) as f32 / max;
    Ok(out.mapv(|v| v * scale))
}

/// Render one glyph at thickness `t` and 8-bit intensity `i`, normalized to
/// `[−1, 1]`. For the synthetic bank `index` picks a skeleton (mod bank size)
/// and the stroke is drawn at exactly width `t`; for ingested images the
/// glyph at `index` goes through the morphological transform.
pub fn render_morphomnist(
    source: &GlyphSource,
    index: usize,
    t: f64,
    i: f64,
    res: usize,
) -> Result<Array2<f32>, DataError> {
    if !(0.0..=255.0).contains(&i) {
        return Err(DataError::Param(format!("intensity must be in [0, 255], got {i}")));
    }
    let coverage = match source {
        GlyphSource::Synthetic => {
            let glyph = render_synthetic_glyph(index, t, res)?;
            let scale = (i / 255.0) as f32;
            glyph.mapv(|v| v * scale)
        }
        GlyphSource::Images(images) => {
            if images.is_empty() {
                return Err(DataError::MissingSource("ingested glyph list is empty".into()));
            }
            let img = &images[index % images.len()];
            if img.dim() != (res, res) {
                return Err(DataError::Param(format!(
                    "ingested glyph is {:?} but the dataset resolution is {res}",
                    img.dim()
                )));
            }
            transform_glyph(img, t, i)?
        }
    };
    Ok(coverage.mapv(|v| 2.0 * v - 1.0))
}
