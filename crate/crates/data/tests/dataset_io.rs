//! Dataset building and persistence: determinism, mask accounting,
//! normalization, and bit-exact write/read roundtrips.

use cda_data::{
    build_dataset, causal_graph, factor_specs, paper_scale, sample_pendulum_scm, BuildConfig,
    DataError, DatasetName, LabeledDataset,
};
use proptest::prelude::*;

fn small(name: DatasetName, n: usize, p_unlabeled: f64) -> BuildConfig {
    let mut cfg = BuildConfig::new(name, n, 1234);
    cfg.p_unlabeled = p_unlabeled;
    cfg.resolution = match name {
        DatasetName::MorphoMnist => 16,
        _ => 32,
    };
    cfg
}

#[test]
fn builds_are_bit_identical_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    for name in DatasetName::ALL {
        let cfg = small(name, 10, 0.3);
        let a = build_dataset(&cfg).unwrap();
        let b = build_dataset(&cfg).unwrap();
        let (pa, pb) = (dir.path().join("a.cdat"), dir.path().join("b.cdat"));
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(
            std::fs::read(&pa).unwrap(),
            std::fs::read(&pb).unwrap(),
            "{name}: container bytes differ"
        );
        assert_eq!(
            std::fs::read(LabeledDataset::sidecar_path(&pa)).unwrap(),
            std::fs::read(LabeledDataset::sidecar_path(&pb)).unwrap(),
            "{name}: sidecars differ"
        );
    }
}

#[test]
fn different_seeds_give_different_data() {
    let cfg_a = small(DatasetName::Pendulum, 8, 0.0);
    let mut cfg_b = cfg_a.clone();
    cfg_b.seed = cfg_a.seed + 1;
    let a = build_dataset(&cfg_a).unwrap();
    let b = build_dataset(&cfg_b).unwrap();
    assert_ne!(a.labels_raw(), b.labels_raw());
}

#[test]
fn unlabeled_count_is_exactly_the_floor() {
    let ds = build_dataset(&small(DatasetName::MorphoMnist, 100, 0.8)).unwrap();
    let zeros = ds.mask().iter().filter(|&&m| m == 0.0).count();
    assert_eq!(zeros, 80);

    let ds = build_dataset(&small(DatasetName::MorphoMnist, 10, 0.33)).unwrap();
    let zeros = ds.mask().iter().filter(|&&m| m == 0.0).count();
    assert_eq!(zeros, 3);

    let ds = build_dataset(&small(DatasetName::MorphoMnist, 10, 0.0)).unwrap();
    assert!(ds.mask().iter().all(|&m| m == 1.0));
}

#[test]
fn write_read_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for name in DatasetName::ALL {
        let ds = build_dataset(&small(name, 6, 0.5)).unwrap();
        let path = dir.path().join(format!("{name}.cdat"));
        ds.save(&path).unwrap();
        let back = LabeledDataset::load(&path).unwrap();
        assert_eq!(ds.images(), back.images(), "{name}");
        assert_eq!(ds.labels_raw(), back.labels_raw(), "{name}");
        assert_eq!(ds.labels_norm(), back.labels_norm(), "{name}");
        assert_eq!(ds.mask(), back.mask(), "{name}");
        assert_eq!(ds.seed(), back.seed(), "{name}");
        assert_eq!(ds.p_unlabeled(), back.p_unlabeled(), "{name}");
        assert_eq!(ds.specs(), back.specs(), "{name}");
        assert_eq!(ds.graph().to_text(), back.graph().to_text(), "{name}");
        assert_eq!(ds.name(), back.name(), "{name}");
    }
}

#[test]
fn stored_normalized_labels_match_the_specs_exactly() {
    let ds = build_dataset(&small(DatasetName::Pendulum, 12, 0.0)).unwrap();
    for (row_raw, row_norm) in ds.labels_raw().outer_iter().zip(ds.labels_norm().outer_iter()) {
        let renorm = ds.normalize(&row_raw.to_vec());
        for (a, b) in renorm.iter().zip(row_norm.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Normalized labels live in (−1, 1) up to boundary contact.
        for v in row_norm.iter() {
            assert!((-1.0..=1.0).contains(v), "normalized label {v} escaped");
        }
    }
}

#[test]
fn pendulum_labels_obey_the_ground_truth_mechanism() {
    // Columns 2 and 3 are deterministic consequences of columns 0 and 1.
    let ds = build_dataset(&small(DatasetName::Pendulum, 20, 0.0)).unwrap();
    for row in ds.labels_raw().outer_iter() {
        let (y3, y4) = sample_pendulum_scm(row[0], row[1]).unwrap();
        assert_eq!(y3.to_bits(), row[2].to_bits());
        assert_eq!(y4.to_bits(), row[3].to_bits());
    }
}

#[test]
fn tampered_sidecar_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build_dataset(&small(DatasetName::MorphoMnist, 4, 0.0)).unwrap();
    let path = dir.path().join("ds.cdat");
    ds.save(&path).unwrap();
    let sidecar = LabeledDataset::sidecar_path(&path);
    let text = std::fs::read_to_string(&sidecar).unwrap();

    std::fs::write(&sidecar, text.replace("format_version = 1", "format_version = 9")).unwrap();
    assert!(matches!(LabeledDataset::load(&path), Err(DataError::Metadata(_))));

    std::fs::write(&sidecar, format!("mystery = 1\n{text}")).unwrap();
    assert!(matches!(LabeledDataset::load(&path), Err(DataError::Metadata(_))));

    std::fs::write(&sidecar, text.replace("[graph]\n", "")).unwrap();
    assert!(matches!(LabeledDataset::load(&path), Err(DataError::Metadata(_))));
}

#[test]
fn corrupted_normalized_labels_are_rejected_on_load() {
    let dir = tempfile::tempdir().unwrap();
    let ds = build_dataset(&small(DatasetName::CircuitLite, 4, 0.0)).unwrap();
    let path = dir.path().join("ds.cdat");
    ds.save(&path).unwrap();

    // Rewrite the container with one normalized label nudged off.
    let c = cda_tensor::Container::load(&path).unwrap();
    let mut labels_norm = c.get::<f64>("labels_norm").unwrap();
    labels_norm[[0, 0]] += 1e-9;
    let mut c2 = cda_tensor::Container::new("dataset:circuit-lite");
    c2.insert("images", &c.get::<f32>("images").unwrap());
    c2.insert("labels_raw", &c.get::<f64>("labels_raw").unwrap());
    c2.insert("labels_norm", &labels_norm);
    c2.insert("mask", &c.get::<f32>("mask").unwrap());
    c2.save(&path).unwrap();

    assert!(matches!(LabeledDataset::load(&path), Err(DataError::Metadata(_))));
}

#[test]
fn dataset_shapes_and_graphs_match_their_family() {
    for name in DatasetName::ALL {
        let ds = build_dataset(&small(name, 3, 0.0)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.channels(), name.channels());
        assert_eq!(ds.n_factors(), name.n_factors());
        assert_eq!(ds.graph().n(), name.n_factors());
        assert_eq!(ds.specs().len(), name.n_factors());
        for (spec, graph_name) in ds.specs().iter().zip(ds.graph().names()) {
            assert_eq!(spec.name(), graph_name);
        }
    }
    // Ground-truth edges: shadow factors descend from angle and light.
    let g = causal_graph(DatasetName::Pendulum);
    assert!(g.has_edge(0, 2) && g.has_edge(0, 3) && g.has_edge(1, 2) && g.has_edge(1, 3));
    assert!(!g.has_edge(2, 3) && !g.has_edge(2, 0));
    // Circuit: red listens to everything, arm drives all lights.
    let g = causal_graph(DatasetName::CircuitLite);
    assert!(g.has_edge(0, 1) && g.has_edge(0, 2) && g.has_edge(0, 3));
    assert!(g.has_edge(1, 3) && g.has_edge(2, 3));
    assert!(!g.has_edge(1, 2));
}

#[test]
fn paper_scale_configurations_are_pinned() {
    assert_eq!(paper_scale(DatasetName::Pendulum), (5_000, 2_000, 96));
    assert_eq!(paper_scale(DatasetName::MorphoMnist), (60_000, 10_000, 28));
    assert_eq!(paper_scale(DatasetName::CircuitLite), (50_000, 10_000, 128));
}

#[test]
fn invalid_build_configs_are_rejected() {
    let mut cfg = BuildConfig::new(DatasetName::Pendulum, 0, 1);
    assert!(matches!(build_dataset(&cfg), Err(DataError::Param(_))));
    cfg.n = 4;
    cfg.p_unlabeled = 1.5;
    assert!(matches!(build_dataset(&cfg), Err(DataError::Param(_))));
}

#[test]
fn dataset_names_roundtrip_through_strings() {
    for name in DatasetName::ALL {
        let s = name.to_string();
        assert_eq!(s.parse::<DatasetName>().unwrap(), name);
    }
    assert!("mnist".parse::<DatasetName>().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_roundtrips_for_every_factor(
        which in 0usize..3,
        frac in 0.0f64..1.0,
    ) {
        let name = DatasetName::ALL[which];
        for spec in factor_specs(name) {
            let raw = spec.lo() + frac * (spec.hi() - spec.lo());
            let back = spec.denormalize(spec.normalize(raw));
            prop_assert!((back - raw).abs() < 1e-12, "{}: {raw} -> {back}", spec.name());
        }
    }
}
