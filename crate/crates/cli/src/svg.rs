//! Minimal deterministic SVG figures. Fixed palette, fixed geometry, fixed
//! number formatting, generic fonts — identical inputs give identical bytes.

use ndarray::Array2;

const PALETTE: [&str; 6] = ["#4878cf", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn text(x: f64, y: f64, size: u32, anchor: &str, s: &str) -> String {
    format!(
        "<text x=\"{x:.1}\" y=\"{y:.1}\" font-family=\"sans-serif\" font-size=\"{size}\" \
         text-anchor=\"{anchor}\">{}</text>\n",
        escape(s)
    )
}

/// Bars grouped by category, one color per series, legend from series names.
pub fn grouped_bar_svg(title: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let mut out = header(title);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let y_max = series
        .iter()
        .flat_map(|(_, vs)| vs.iter().copied())
        .fold(1e-12_f64, f64::max)
        .max(1.0);

    // Axes and y ticks.
    out += &format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    );
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let y = MARGIN_T + plot_h * (1.0 - k as f64 / 5.0);
        out += &text(MARGIN_L - 8.0, y + 4.0, 11, "end", &format!("{v:.2}"));
        out += &format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{MARGIN_L}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            MARGIN_L - 4.0
        );
    }

    let n_cat = categories.len().max(1);
    let n_ser = series.len().max(1);
    let slot = plot_w / n_cat as f64;
    let bar = (slot * 0.8) / n_ser as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let x0 = MARGIN_L + ci as f64 * slot + slot * 0.1;
        for (si, (_, vs)) in series.iter().enumerate() {
            let v = vs.get(ci).copied().unwrap_or(0.0);
            let h = plot_h * (v / y_max).clamp(0.0, 1.0);
            out += &format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                x0 + si as f64 * bar,
                MARGIN_T + plot_h - h,
                bar,
                h,
                PALETTE[si % PALETTE.len()]
            );
        }
        out += &text(x0 + slot * 0.4, MARGIN_T + plot_h + 18.0, 12, "middle", cat);
    }

    // Legend.
    for (si, (name, _)) in series.iter().enumerate() {
        let y = MARGIN_T + 10.0 + si as f64 * 20.0;
        out += &format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            WIDTH - MARGIN_R + 10.0,
            y,
            PALETTE[si % PALETTE.len()]
        );
        out += &text(WIDTH - MARGIN_R + 28.0, y + 10.0, 11, "start", name);
    }
    out += "</svg>\n";
    out
}

/// A white→blue heat map with per-cell values printed.
pub fn heatmap_svg(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    values: &Array2<f64>,
) -> String {
    let mut out = header(title);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let (rows, cols) = values.dim();
    let v_max = values.iter().copied().fold(1e-12_f64, f64::max);
    let cw = plot_w / cols.max(1) as f64;
    let ch = plot_h / rows.max(1) as f64;
    for i in 0..rows {
        for j in 0..cols {
            let v = values[[i, j]];
            let t = (v / v_max).clamp(0.0, 1.0);
            let r = (255.0 - t * (255.0 - 40.0)).round() as u8;
            let g = (255.0 - t * (255.0 - 80.0)).round() as u8;
            let b = (255.0 - t * (255.0 - 160.0)).round() as u8;
            let x = MARGIN_L + j as f64 * cw;
            let y = MARGIN_T + i as f64 * ch;
            out += &format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cw:.1}\" height=\"{ch:.1}\" \
                 fill=\"rgb({r},{g},{b})\" stroke=\"white\"/>\n"
            );
            let bright = t > 0.6;
            out += &format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
                 text-anchor=\"middle\" fill=\"{}\">{v:.3}</text>\n",
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                if bright { "white" } else { "black" }
            );
        }
    }
    for (i, label) in row_labels.iter().enumerate() {
        out += &text(
            MARGIN_L - 8.0,
            MARGIN_T + i as f64 * ch + ch / 2.0 + 4.0,
            11,
            "end",
            label,
        );
    }
    for (j, label) in col_labels.iter().enumerate() {
        out += &text(
            MARGIN_L + j as f64 * cw + cw / 2.0,
            MARGIN_T + plot_h + 18.0,
            11,
            "middle",
            label,
        );
    }
    out += "</svg>\n";
    out
}

/// A single polyline with circular markers through `points` (already sorted
/// by x), axes labeled.
pub fn curve_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut out = header(title);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).min(0.0);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).max(x_min + 1e-9);
    let y_max = points.iter().map(|p| p.1).fold(1e-12_f64, f64::max);
    let sx = |x: f64| MARGIN_L + plot_w * (x - x_min) / (x_max - x_min);
    let sy = |y: f64| MARGIN_T + plot_h * (1.0 - (y / y_max).clamp(0.0, 1.0));

    out += &format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        MARGIN_T + plot_h,
        MARGIN_T + plot_h,
        MARGIN_L + plot_w,
        MARGIN_T + plot_h
    );
    let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
    out += &format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
        path.join(" "),
        PALETTE[0]
    );
    for &(x, y) in points {
        out += &format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"4\" fill=\"{}\"/>\n",
            sx(x),
            sy(y),
            PALETTE[0]
        );
        out += &text(sx(x), MARGIN_T + plot_h + 18.0, 11, "middle", &format!("{x:.2}"));
        out += &text(sx(x), sy(y) - 10.0, 10, "middle", &format!("{y:.4}"));
    }
    out += &text(MARGIN_L + plot_w / 2.0, HEIGHT - 12.0, 12, "middle", x_label);
    out += &format!(
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0,
        escape(y_label)
    );
    out += "</svg>\n";
    out
}
