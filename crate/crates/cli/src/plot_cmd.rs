//! Figure emission from results files: a DCI bar chart across runs, one
//! effectiveness heat map per run, and one guidance-weight effect curve per
//! run. Everything is rendered to deterministic SVG.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::results::Results;
use crate::svg::{curve_svg, grouped_bar_svg, heatmap_svg};
use crate::CliError;

/// A loaded results file with the name it will carry in legends.
struct Run {
    name: String,
    results: Results,
}

/// Legend names: the file stem (minus any `results-` prefix); when stems
/// collide across files, the parent directory name is prepended.
fn run_names(paths: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            stem.strip_prefix("results-").unwrap_or(stem).to_string()
        })
        .collect();
    let mut names = Vec::with_capacity(paths.len());
    for (i, stem) in stems.iter().enumerate() {
        let collides = stems.iter().enumerate().any(|(j, s)| j != i && s == stem);
        if collides {
            let parent = paths[i]
                .parent()
                .and_then(|p| p.file_name())
                .and_then(|s| s.to_str())
                .unwrap_or("run");
            names.push(format!("{parent}/{stem}"));
        } else {
            names.push(stem.clone());
        }
    }
    names
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

/// The `effectiveness.do_<row>.<col>` entries as an ordered table.
fn effectiveness_table(results: &Results) -> Option<(Vec<String>, Vec<String>, Array2<f64>)> {
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    let mut cells: Vec<(usize, usize, f64)> = Vec::new();
    for (key, value) in results.with_prefix("effectiveness.do_") {
        let rest = &key["effectiveness.do_".len()..];
        let (row, col) = rest.split_once('.')?;
        let ri = rows.iter().position(|r| r == row).unwrap_or_else(|| {
            rows.push(row.to_string());
            rows.len() - 1
        });
        let ci = cols.iter().position(|c| c == col).unwrap_or_else(|| {
            cols.push(col.to_string());
            cols.len() - 1
        });
        cells.push((ri, ci, value));
    }
    if cells.is_empty() {
        return None;
    }
    let mut table = Array2::<f64>::zeros((rows.len(), cols.len()));
    for (r, c, v) in cells {
        table[[r, c]] = v;
    }
    let rows = rows.into_iter().map(|r| format!("do({r})")).collect();
    Some((rows, cols, table))
}

/// The `omega_effect.do_<f>.w<ω>` entries as (ω, effect) points plus the
/// intervened factor's name.
fn omega_curve(results: &Results) -> Option<(String, Vec<(f64, f64)>)> {
    let mut factor = String::new();
    let mut points: Vec<(f64, f64)> = Vec::new();
    for (key, value) in results.with_prefix("omega_effect.do_") {
        let rest = &key["omega_effect.do_".len()..];
        let (f, w) = rest.split_once(".w")?;
        factor = f.to_string();
        points.push((w.parse().ok()?, value));
    }
    if points.is_empty() {
        return None;
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some((factor, points))
}

/// Renders every figure the given results files support into `out_dir`.
/// Fails if no file contributes any recognizable metric.
pub fn cmd_plot(results_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if results_paths.is_empty() {
        return Err(CliError::Parse("no results files given".into()));
    }
    let names = run_names(results_paths);
    let runs: Vec<Run> = results_paths
        .iter()
        .zip(names)
        .map(|(path, name)| Ok(Run { name, results: Results::load(path)? }))
        .collect::<Result<_, CliError>>()?;

    std::fs::create_dir_all(out_dir)?;
    let mut emitted = Vec::new();

    let dci_series: Vec<(String, Vec<f64>)> = runs
        .iter()
        .filter_map(|r| r.results.get("dci").map(|v| (r.name.clone(), vec![v])))
        .collect();
    if !dci_series.is_empty() {
        let svg = grouped_bar_svg("Disentanglement (DCI)", &["DCI".to_string()], &dci_series);
        let path = out_dir.join("dci-bars.svg");
        crate::rundir::write_atomic(&path, svg.as_bytes())?;
        emitted.push(path);
    }

    for run in &runs {
        if let Some((rows, cols, table)) = effectiveness_table(&run.results) {
            let svg = heatmap_svg(
                &format!("Effectiveness MAE — {}", run.name),
                &rows,
                &cols,
                &table,
            );
            let path = out_dir.join(format!("effectiveness-{}.svg", slug(&run.name)));
            crate::rundir::write_atomic(&path, svg.as_bytes())?;
            emitted.push(path);
        }
        if let Some((factor, points)) = omega_curve(&run.results) {
            let svg = curve_svg(
                &format!("Guidance weight vs do({factor}) effect — {}", run.name),
                "guidance weight ω",
                "mean |Δ predictor|",
                &points,
            );
            let path = out_dir.join(format!("omega-effect-{}.svg", slug(&run.name)));
            crate::rundir::write_atomic(&path, svg.as_bytes())?;
            emitted.push(path);
        }
    }

    if emitted.is_empty() {
        return Err(CliError::Parse(
            "results files contain no plottable metrics".into(),
        ));
    }
    Ok(emitted)
}
