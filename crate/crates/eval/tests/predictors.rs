//! End-to-end checks for the anti-causal factor predictors: they must read
//! the generating factors off rendered images well enough to certify, be
//! exactly reproducible, and plug into the effectiveness table consistently.

use cda_data::{build_dataset, BuildConfig, DatasetName};
use cda_eval::{
    effectiveness_mae, mae_table, train_anticausal_predictors, EvalError, PredictorConfig,
    NORMALIZED_RANGE,
};
use ndarray::{array, Array2, Axis, Slice};

fn small_morpho(n: usize, seed: u64) -> cda_data::LabeledDataset {
    let mut bc = BuildConfig::new(DatasetName::MorphoMnist, n, seed);
    bc.resolution = 16;
    build_dataset(&bc).unwrap()
}

#[test]
fn trained_predictors_read_factor_values_off_held_out_images() {
    let ds = small_morpho(600, 11);
    let cfg = PredictorConfig { steps: 500, ..Default::default() };
    let preds = train_anticausal_predictors(&ds, &cfg).unwrap();

    println!("validation MAE (normalized units): {:?}", preds.val_mae());
    assert_eq!(preds.n_factors(), 2);
    assert_eq!(preds.factor_names(), ["thickness", "intensity"]);

    // The split is a disjoint cover of the dataset.
    let train = preds.train_indices();
    let val = preds.val_indices();
    assert_eq!(train.end, val.start);
    assert_eq!(val.end, ds.len());
    assert!(!val.is_empty());

    // Certification already bounds every factor at 10% of the label range;
    // stroke intensity is nearly an affine readout of mean brightness, so it
    // should be far better than the gate.
    for &mae in preds.val_mae() {
        assert!(mae <= 0.10 * NORMALIZED_RANGE);
    }
    assert!(
        preds.val_mae()[1] < 0.04,
        "intensity MAE {} not tight",
        preds.val_mae()[1]
    );

    // Scoring the validation slice through the public effectiveness path
    // reproduces the stored validation MAE exactly.
    let val_images = ds
        .images()
        .slice_axis(Axis(0), Slice::from(val.clone()))
        .to_owned();
    let val_labels = ds
        .labels_norm()
        .slice_axis(Axis(0), Slice::from(val))
        .to_owned();
    let table = effectiveness_mae(&preds, &val_images, &val_labels).unwrap();
    assert_eq!(table.as_slice(), preds.val_mae());
}

#[test]
fn retraining_with_the_same_seed_is_bit_identical_and_seed_sensitive() {
    let ds = small_morpho(200, 12);
    // Short schedule with a permissive gate: this test is about determinism,
    // not fit quality.
    let cfg = PredictorConfig { steps: 60, max_val_mae_frac: 0.9, ..Default::default() };

    let a = train_anticausal_predictors(&ds, &cfg).unwrap();
    let b = train_anticausal_predictors(&ds, &cfg).unwrap();
    assert_eq!(a.val_mae(), b.val_mae());

    let probe = ds.images().slice_axis(Axis(0), Slice::from(0..8)).to_owned();
    assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());

    let other = PredictorConfig { seed: cfg.seed + 1, ..cfg };
    let c = train_anticausal_predictors(&ds, &other).unwrap();
    assert_ne!(a.val_mae(), c.val_mae());
}

#[test]
fn an_undertrained_predictor_fails_the_quality_gate() {
    let ds = small_morpho(200, 13);
    let cfg = PredictorConfig { steps: 1, max_val_mae_frac: 0.05, ..Default::default() };
    match train_anticausal_predictors(&ds, &cfg) {
        Err(EvalError::PredictorQuality { val_mae, allowed, .. }) => {
            assert!(val_mae > allowed);
            assert!((allowed - 0.05 * NORMALIZED_RANGE).abs() < 1e-12);
        }
        Err(other) => panic!("expected a quality failure, got {other:?}"),
        Ok(_) => panic!("expected a quality failure, got a certified set"),
    }
}

#[test]
fn invalid_split_configs_are_rejected() {
    let ds = small_morpho(120, 14);
    for bad in [0.0, 1.0, -0.2] {
        let cfg = PredictorConfig { val_fraction: bad, ..Default::default() };
        assert!(train_anticausal_predictors(&ds, &cfg).is_err());
    }
    // Training slice smaller than one batch.
    let cfg = PredictorConfig { val_fraction: 0.9, batch: 32, ..Default::default() };
    assert!(train_anticausal_predictors(&ds, &cfg).is_err());
}

#[test]
fn the_error_table_is_zero_against_itself() {
    let x = array![[0.1, -0.4], [0.9, 0.2], [-0.3, 0.7]];
    assert_eq!(mae_table(&x, &x).unwrap(), vec![0.0, 0.0]);

    let shifted = &x + 0.25;
    let table = mae_table(&shifted, &x).unwrap();
    for mae in table {
        assert!((mae - 0.25).abs() < 1e-12);
    }

    let wrong_shape = Array2::<f64>::zeros((2, 2));
    assert!(mae_table(&x, &wrong_shape).is_err());
    let empty = Array2::<f64>::zeros((0, 2));
    assert!(mae_table(&empty, &empty).is_err());
}
