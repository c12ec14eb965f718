//! A small, fully deterministic random-forest regressor whose job is feature
//! importance, not state-of-the-art accuracy.
//!
//! Determinism is taken further than just seeding: before any tree is grown,
//! samples are put into a canonical order (lexicographic by feature row, then
//! target), so the fitted forest — and therefore every importance number — is
//! *exactly* invariant under permutations of the input rows.
//!
//! Trees are classic CART regression trees: every feature is scanned at every
//! node and the split maximizing the decrease in sum-of-squares wins. When two
//! features induce the same partition of a node their gains differ only by
//! summation-order rounding, so near-tied candidates are resolved by the
//! feature's association with the target inside the node (a feature that *is*
//! the target always keeps its own split) rather than by float noise. A
//! feature's importance is the total decrease it was responsible for, averaged
//! over trees and normalized.

use std::cmp::Ordering;

use cda_tensor::rng::derive_rng;
use ndarray::{Array2, ArrayView1};
use rand::Rng;

use crate::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum number of (bootstrap) samples on each side of a split.
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 100, max_depth: 8, min_leaf: 2, seed: 7 }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
}

#[derive(Debug, Clone)]
pub struct RandomForest {
    trees: Vec<Vec<Node>>,
    importances: Vec<f64>,
    n_features: usize,
}

impl RandomForest {
    /// Fits `cfg.n_trees` trees to `(x, y)`; `x` is `[n_samples, n_features]`.
    pub fn fit(x: &Array2<f64>, y: &[f64], cfg: &ForestConfig) -> Result<Self, EvalError> {
        let (n, d) = x.dim();
        if y.len() != n {
            return Err(EvalError::Shape(format!(
                "{n} feature rows but {} targets",
                y.len()
            )));
        }
        if n < 2 || d == 0 {
            return Err(EvalError::DegenerateData(format!(
                "need at least 2 samples and 1 feature, got {n} x {d}"
            )));
        }
        if cfg.n_trees == 0 || cfg.min_leaf == 0 || cfg.max_depth == 0 {
            return Err(EvalError::DegenerateData(
                "tree count, leaf size, and depth must be positive".into(),
            ));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite("forest inputs must be finite".into()));
        }

        // Canonical sample order: trees never see the caller's row order.
        let mut canon: Vec<u32> = (0..n as u32).collect();
        canon.sort_by(|&a, &b| {
            let (ra, rb) = (x.row(a as usize), x.row(b as usize));
            for (va, vb) in ra.iter().zip(rb.iter()) {
                match va.total_cmp(vb) {
                    Ordering::Equal => continue,
                    other => return other,
                }
            }
            y[a as usize].total_cmp(&y[b as usize])
        });

        let mut raw_importance = vec![0.0; d];
        let mut trees = Vec::with_capacity(cfg.n_trees);
        for t in 0..cfg.n_trees {
            let mut rng = derive_rng(cfg.seed, "forest", t as u64);
            let rows: Vec<u32> = (0..n).map(|_| canon[rng.gen_range(0..n)]).collect();
            // One sorted index list per feature, partitioned stably as the
            // tree grows so no node ever re-sorts.
            let lists: Vec<Vec<u32>> = (0..d)
                .map(|j| {
                    let mut l = rows.clone();
                    l.sort_by(|&a, &b| {
                        x[[a as usize, j]].total_cmp(&x[[b as usize, j]]).then(a.cmp(&b))
                    });
                    l
                })
                .collect();
            let mut nodes = Vec::new();
            grow(x, y, lists, 0, cfg, &mut nodes, &mut raw_importance);
            trees.push(nodes);
        }

        let total: f64 = raw_importance.iter().sum();
        let importances = if total > 0.0 {
            raw_importance.iter().map(|v| v / total).collect()
        } else {
            raw_importance
        };
        Ok(RandomForest { trees, importances, n_features: d })
    }

    /// Per-feature share of the total squared-error reduction, summing to 1
    /// (all zeros if no tree ever split).
    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Mean prediction over trees for each row of `x`.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>, EvalError> {
        if x.ncols() != self.n_features {
            return Err(EvalError::Shape(format!(
                "forest was fit on {} features, got {}",
                self.n_features,
                x.ncols()
            )));
        }
        Ok((0..x.nrows())
            .map(|i| {
                let row = x.row(i);
                let sum: f64 = self.trees.iter().map(|t| walk(t, row)).sum();
                sum / self.trees.len() as f64
            })
            .collect())
    }
}

fn walk(nodes: &[Node], row: ArrayView1<f64>) -> f64 {
    let mut at = 0usize;
    loop {
        match nodes[at] {
            Node::Leaf(v) => return v,
            Node::Split { feature, threshold, left, right } => {
                at = if row[feature as usize] <= threshold { left as usize } else { right as usize };
            }
        }
    }
}

/// Grows one subtree from per-feature sorted sample lists; returns its node
/// index. `lists[j]` holds the node's samples sorted by feature `j` (all
/// lists are the same multiset).
fn grow(
    x: &Array2<f64>,
    y: &[f64],
    lists: Vec<Vec<u32>>,
    depth: usize,
    cfg: &ForestConfig,
    nodes: &mut Vec<Node>,
    importance: &mut [f64],
) -> u32 {
    let ids = &lists[0];
    let n = ids.len();
    let sum: f64 = ids.iter().map(|&i| y[i as usize]).sum();
    let sum2: f64 = ids.iter().map(|&i| y[i as usize] * y[i as usize]).sum();
    let mean = sum / n as f64;
    let sse = (sum2 - sum * sum / n as f64).max(0.0);

    let leaf = |nodes: &mut Vec<Node>| {
        nodes.push(Node::Leaf(mean));
        (nodes.len() - 1) as u32
    };
    if depth >= cfg.max_depth || n < 2 * cfg.min_leaf || sse <= 1e-12 {
        return leaf(nodes);
    }

    // Best split per feature: strictly larger gain wins within the scan, so
    // the leftmost threshold is kept on exact ties.
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for (j, lst) in lists.iter().enumerate() {
        let (mut p1, mut p2) = (0.0, 0.0);
        let mut best_j: Option<(f64, f64)> = None;
        for k in 1..n {
            let prev = lst[k - 1] as usize;
            let yv = y[prev];
            p1 += yv;
            p2 += yv * yv;
            let lo = x[[prev, j]];
            let hi = x[[lst[k] as usize, j]];
            if lo == hi || k < cfg.min_leaf || n - k < cfg.min_leaf {
                continue;
            }
            let sse_l = (p2 - p1 * p1 / k as f64).max(0.0);
            let (q1, q2) = (sum - p1, sum2 - p2);
            let sse_r = (q2 - q1 * q1 / (n - k) as f64).max(0.0);
            let gain = sse - sse_l - sse_r;
            if gain > best_j.map_or(1e-12, |(g, _)| g) {
                best_j = Some((gain, 0.5 * (lo + hi)));
            }
        }
        if let Some((g, t)) = best_j {
            candidates.push((j, g, t));
        }
    }
    if candidates.is_empty() {
        return leaf(nodes);
    }

    // Two features that induce the same partition of the node compute the
    // same gain through different summation orders, so their gains land
    // within rounding of each other rather than exactly equal. Such near-ties
    // are resolved by the feature's association with the target inside this
    // node — squared covariance with y, scale-compensated — not by float
    // noise: a feature carrying the target exactly maximizes that score
    // (Cauchy–Schwarz), so it never loses its own split to a merely
    // correlated neighbor. Remaining exact ties keep the lowest index.
    let g_star = candidates.iter().fold(0.0_f64, |m, &(_, g, _)| m.max(g));
    let band: Vec<(usize, f64, f64)> = candidates
        .into_iter()
        .filter(|&(_, g, _)| g >= g_star * (1.0 - 1e-9))
        .collect();
    let (feature, gain, threshold) = if band.len() == 1 {
        band[0]
    } else {
        let assoc = |j: usize| -> (f64, f64) {
            let (mut sx, mut sxx, mut sxy) = (0.0, 0.0, 0.0);
            for &i in ids {
                let (xv, yv) = (x[[i as usize, j]], y[i as usize]);
                sx += xv;
                sxx += xv * xv;
                sxy += xv * yv;
            }
            let var = (sxx - sx * sx / n as f64).max(0.0);
            if var == 0.0 {
                return (0.0, 1.0);
            }
            let cov = sxy - sx * sum / n as f64;
            (cov * cov, var)
        };
        let mut best = band[0];
        let (mut c2_b, mut v_b) = assoc(best.0);
        for &cand in &band[1..] {
            let (c2, v) = assoc(cand.0);
            // score(cand) > score(best) without dividing: c2/v compared by
            // cross-multiplication (both variances are non-negative).
            if c2 * v_b > c2_b * v {
                best = cand;
                c2_b = c2;
                v_b = v;
            }
        }
        best
    };
    importance[feature] += gain;

    let mut left_lists = Vec::with_capacity(lists.len());
    let mut right_lists = Vec::with_capacity(lists.len());
    for lst in lists {
        let (l, r): (Vec<u32>, Vec<u32>) =
            lst.into_iter().partition(|&i| x[[i as usize, feature]] <= threshold);
        left_lists.push(l);
        right_lists.push(r);
    }

    let slot = nodes.len();
    nodes.push(Node::Leaf(f64::NAN)); // reserved; overwritten below
    let left = grow(x, y, left_lists, depth + 1, cfg, nodes, importance);
    let right = grow(x, y, right_lists, depth + 1, cfg, nodes, importance);
    nodes[slot] =
        Node::Split { feature: feature as u32, threshold, left, right };
    slot as u32
}
