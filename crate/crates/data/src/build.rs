use cda_scm::CausalGraph;
use cda_tensor::rng::derive_rng;
use ndarray::{Array1, Array2, ArrayD};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{
    circuit, morphomnist, pendulum, DataError, DatasetName, FactorSpec, LabeledDataset,
};

/// Everything `build_dataset` needs.
#[derive(Debug, Clone)]
pub struct BuildConfig {
    pub name: DatasetName,
    pub n: usize,
    pub seed: u64,
    /// Fraction of samples whose labels are hidden from training;
    /// exactly `⌊p_unlabeled · n⌋` samples get mask 0.
    pub p_unlabeled: f64,
    pub resolution: usize,
}

impl BuildConfig {
    pub fn new(name: DatasetName, n: usize, seed: u64) -> Self {
        BuildConfig { name, n, seed, p_unlabeled: 0.0, resolution: name.default_resolution() }
    }
}

/// The ground-truth causal graph over each dataset's factors.
pub fn causal_graph(name: DatasetName) -> CausalGraph {
    let (names, edges): (Vec<&str>, Vec<(usize, usize)>) = match name {
        DatasetName::MorphoMnist => (vec!["thickness", "intensity"], vec![(0, 1)]),
        DatasetName::Pendulum => (
            vec!["angle", "light", "shadow_len", "shadow_pos"],
            vec![(0, 2), (0, 3), (1, 2), (1, 3)],
        ),
        DatasetName::CircuitLite => (
            vec!["arm", "blue", "green", "red"],
            vec![(0, 1), (0, 2), (0, 3), (1, 3), (2, 3)],
        ),
    };
    let n = names.len();
    let mut a = Array2::<f64>::zeros((n, n));
    for (from, to) in edges {
        a[[from, to]] = 1.0;
    }
    CausalGraph::new(a, names.into_iter().map(String::from).collect())
        .expect("built-in graphs are valid DAGs")
}

/// Factor specifications (name and raw range) for each dataset.
pub fn factor_specs(name: DatasetName) -> Vec<FactorSpec> {
    let mk = |name: &str, lo: f64, hi: f64| FactorSpec::new(name, lo, hi).expect("built-in spec");
    match name {
        DatasetName::MorphoMnist => vec![mk("thickness", 0.5, 8.0), mk("intensity", 64.0, 255.0)],
        DatasetName::Pendulum => vec![
            mk("angle", -45.0, 45.0),
            mk("light", 60.0, 145.0),
            mk("shadow_len", 3.0, 13.0),
            mk("shadow_pos", 1.0, 20.0),
        ],
        DatasetName::CircuitLite => vec![
            mk("arm", 0.0, 1.0),
            mk("blue", 0.0, 1.0),
            mk("green", 0.0, 1.0),
            mk("red", 0.0, 1.0),
        ],
    }
}

/// Sizes and resolutions matching the source experiments, for runs outside
/// the test suite: `(n_train, n_test, resolution)`.
pub fn paper_scale(name: DatasetName) -> (usize, usize, usize) {
    match name {
        DatasetName::MorphoMnist => (60_000, 10_000, 28),
        DatasetName::Pendulum => (5_000, 2_000, 96),
        DatasetName::CircuitLite => (50_000, 10_000, 128),
    }
}

/// Generate `cfg.n` samples: labels from the ground-truth SCM, images from
/// the procedural renderer, normalized labels, and a supervision mask with
/// exactly `⌊p_unlabeled · n⌋` zeros. Fully determined by `cfg`.
pub fn build_dataset(cfg: &BuildConfig) -> Result<LabeledDataset, DataError> {
    if cfg.n == 0 {
        return Err(DataError::Param("dataset size must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.p_unlabeled) {
        return Err(DataError::Param(format!(
            "p_unlabeled must be in [0, 1], got {}",
            cfg.p_unlabeled
        )));
    }
    let specs = factor_specs(cfg.name);
    let graph = causal_graph(cfg.name);
    let k = specs.len();
    let (c, res) = (cfg.name.channels(), cfg.resolution);

    let mut images = ArrayD::<f32>::zeros(vec![cfg.n, c, res, res]);
    let mut labels_raw = Array2::<f64>::zeros((cfg.n, k));
    let stream_label = format!("data/{}", cfg.name);

    for idx in 0..cfg.n {
        let mut rng = derive_rng(cfg.seed, &stream_label, idx as u64);
        let (raw, image): (Vec<f64>, ArrayD<f32>) = match cfg.name {
            DatasetName::MorphoMnist => {
                // Draw order: glyph id, thickness noise, intensity noise.
                let digit = rng.gen_range(0..morphomnist::glyph_bank_len());
                let u_t: f64 = Gamma::new(10.0, 0.2)
                    .expect("fixed positive parameters")
                    .sample(&mut rng);
                let u_i: f64 = StandardNormal.sample(&mut rng);
                let (t, i) = morphomnist::sample_morphomnist_scm(u_t, u_i);
                let img = morphomnist::render_morphomnist(
                    &morphomnist::GlyphSource::Synthetic,
                    digit,
                    t,
                    i,
                    res,
                )?;
                (vec![t, i], img.into_dyn().insert_axis(ndarray::Axis(0)))
            }
            DatasetName::Pendulum => {
                let y1: f64 = rng.gen_range(-45.0..45.0);
                let y2: f64 = rng.gen_range(60.0..145.0);
                let (y3, y4) = pendulum::sample_pendulum_scm(y1, y2)?;
                let img = pendulum::render_pendulum(y1, y2, y3, y4, res)?;
                (vec![y1, y2, y3, y4], img.into_dyn())
            }
            DatasetName::CircuitLite => {
                let s = circuit::sample_circuit_scm(&mut rng);
                let img = circuit::render_circuit_lite(s.y1, s.y2, s.y3, s.y4, res)?;
                (vec![s.y1, s.y2, s.y3, s.y4], img.into_dyn())
            }
        };
        for (j, v) in raw.iter().enumerate() {
            labels_raw[[idx, j]] = *v;
        }
        images.index_axis_mut(ndarray::Axis(0), idx).assign(&image);
    }

    let labels_norm = Array2::from_shape_fn((cfg.n, k), |(idx, j)| {
        specs[j].normalize(labels_raw[[idx, j]])
    });

    let n_unlabeled = (cfg.p_unlabeled * cfg.n as f64).floor() as usize;
    let mut order: Vec<usize> = (0..cfg.n).collect();
    order.shuffle(&mut derive_rng(cfg.seed, &format!("data/mask/{}", cfg.name), 0));
    let mut mask = Array1::<f32>::ones(cfg.n);
    for &idx in order.iter().take(n_unlabeled) {
        mask[idx] = 0.0;
    }

    let ds = LabeledDataset {
        name: cfg.name,
        images,
        labels_raw,
        labels_norm,
        mask,
        specs,
        graph,
        seed: cfg.seed,
        p_unlabeled: cfg.p_unlabeled,
    };
    ds.validate()?;
    Ok(ds)
}
