//! Checkpoint round-trips, resume equivalence, and rejection of foreign or
//! damaged files.

mod common;

use cda_model::{
    load_checkpoint, save_checkpoint, train_step, ModelError, TrainBatch, TrainConfig,
};
use cda_tensor::{Adam, Container, Scalar};
use common::*;
use ndarray::{Array1, Array2, ArrayD, IxDyn};

fn batch<T: Scalar>() -> TrainBatch<T> {
    TrainBatch {
        x0: image_batch::<T>(&[2, 1, 8, 8], 301),
        labels: Array2::from_shape_vec((2, 2), vec![0.2, -0.4, 0.6, 0.9])
            .unwrap()
            .mapv(T::of_f64),
        mask: Array1::from_vec(vec![1.0, 0.0]).mapv(T::of_f64),
    }
}

#[test]
fn checkpoint_roundtrips_every_piece_of_training_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckpt");
    let seed = 77u64;
    let tc = TrainConfig::default();
    let (model, mut params) = build::<f32>(smoke_cfg(), seed);
    let schedule = model.cfg().noise_schedule().unwrap();
    let mut opt = Adam::new(&params, tc.lr, tc.clip_norm);
    let b = batch::<f32>();
    for step in 0..3 {
        train_step(&model, &mut params, &mut opt, &b, step, seed, &tc, &schedule).unwrap();
    }

    save_checkpoint(&path, &model, &params, &opt, 3, seed, &tc).unwrap();
    let loaded = load_checkpoint::<f32>(&path).unwrap();

    assert!(params_bitwise_equal(&params, &loaded.params));
    assert_eq!(loaded.step, 3);
    assert_eq!(loaded.seed, seed);
    assert_eq!(loaded.train, tc);
    assert_eq!(loaded.model.cfg(), model.cfg());
    assert_eq!(loaded.model.causal_graph().to_text(), model.causal_graph().to_text());
    assert_eq!(loaded.opt.step_count(), opt.step_count());
    let (m0, v0) = opt.moments();
    let (m1, v1) = loaded.opt.moments();
    assert_eq!(m0, m1);
    assert_eq!(v0, v1);
}

#[test]
fn resumed_training_is_bit_identical_to_uninterrupted_training() {
    let seed = 88u64;
    let tc = TrainConfig::default();
    let b = batch::<f32>();

    // Uninterrupted: six steps straight through.
    let (model_a, mut params_a) = build::<f32>(smoke_cfg(), seed);
    let schedule = model_a.cfg().noise_schedule().unwrap();
    let mut opt_a = Adam::new(&params_a, tc.lr, tc.clip_norm);
    for step in 0..6 {
        train_step(&model_a, &mut params_a, &mut opt_a, &b, step, seed, &tc, &schedule).unwrap();
    }

    // Interrupted: three steps, a save/load cycle, then three more.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");
    let (model_b, mut params_b) = build::<f32>(smoke_cfg(), seed);
    let mut opt_b = Adam::new(&params_b, tc.lr, tc.clip_norm);
    for step in 0..3 {
        train_step(&model_b, &mut params_b, &mut opt_b, &b, step, seed, &tc, &schedule).unwrap();
    }
    save_checkpoint(&path, &model_b, &params_b, &opt_b, 3, seed, &tc).unwrap();
    drop((model_b, params_b, opt_b));

    let mut resumed = load_checkpoint::<f32>(&path).unwrap();
    for step in resumed.step..6 {
        train_step(
            &resumed.model,
            &mut resumed.params,
            &mut resumed.opt,
            &b,
            step,
            resumed.seed,
            &resumed.train,
            &schedule,
        )
        .unwrap();
    }

    assert!(
        params_bitwise_equal(&params_a, &resumed.params),
        "a resume must replay the identical trajectory"
    );
}

#[test]
fn foreign_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.ckpt");
    let seed = 5u64;
    let tc = TrainConfig::default();
    let (model, params) = build::<f32>(smoke_cfg(), seed);
    let opt = Adam::new(&params, tc.lr, tc.clip_norm);
    save_checkpoint(&path, &model, &params, &opt, 0, seed, &tc).unwrap();

    let mut raw = Container::load(&path).unwrap();
    raw.meta = raw.meta.replacen("version = 1", "version = 99", 1);
    raw.save(&path).unwrap();

    match load_checkpoint::<f32>(&path) {
        Err(ModelError::Checkpoint(msg)) => assert!(msg.contains("99"), "got: {msg}"),
        Err(e) => panic!("expected a schema rejection, got {e}"),
        Ok(_) => panic!("expected a schema rejection, got a loaded checkpoint"),
    }
}

#[test]
fn unknown_metadata_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.ckpt");
    let seed = 6u64;
    let tc = TrainConfig::default();
    let (model, params) = build::<f32>(smoke_cfg(), seed);
    let opt = Adam::new(&params, tc.lr, tc.clip_norm);
    save_checkpoint(&path, &model, &params, &opt, 0, seed, &tc).unwrap();

    let mut raw = Container::load(&path).unwrap();
    raw.meta = format!("mystery_knob = 3\n{}", raw.meta);
    raw.save(&path).unwrap();
    assert!(matches!(load_checkpoint::<f32>(&path), Err(ModelError::Checkpoint(_))));
}

#[test]
fn missing_and_misshapen_tensors_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ckpt");
    let seed = 7u64;
    let tc = TrainConfig::default();
    let (model, params) = build::<f32>(smoke_cfg(), seed);
    let opt = Adam::new(&params, tc.lr, tc.clip_norm);
    save_checkpoint(&path, &model, &params, &opt, 0, seed, &tc).unwrap();
    let original = Container::load(&path).unwrap();
    let names: Vec<String> = original.names().map(str::to_string).collect();

    // Drop one parameter tensor.
    let dropped = dir.path().join("dropped.ckpt");
    let mut c = Container::new(original.meta.clone());
    for name in names.iter().filter(|n| *n != "param.null_token") {
        c.insert(name, &original.get::<f32>(name).unwrap());
    }
    c.save(&dropped).unwrap();
    assert!(load_checkpoint::<f32>(&dropped).is_err());

    // Replace one parameter tensor with the wrong shape.
    let misshapen = dir.path().join("misshapen.ckpt");
    let mut c = Container::new(original.meta.clone());
    for name in &names {
        if name == "param.null_token" {
            c.insert(name, &ArrayD::<f32>::zeros(IxDyn(&[17])));
        } else {
            c.insert(name, &original.get::<f32>(name).unwrap());
        }
    }
    c.save(&misshapen).unwrap();
    match load_checkpoint::<f32>(&misshapen) {
        Err(ModelError::Checkpoint(msg)) => assert!(msg.contains("null_token"), "got: {msg}"),
        Err(e) => panic!("expected a shape rejection, got {e}"),
        Ok(_) => panic!("expected a shape rejection, got a loaded checkpoint"),
    }

    // A stray extra tensor is also a corruption signal.
    let extra = dir.path().join("extra.ckpt");
    let mut c = Container::new(original.meta.clone());
    for name in &names {
        c.insert(name, &original.get::<f32>(name).unwrap());
    }
    c.insert("param.stowaway", &ArrayD::<f32>::zeros(IxDyn(&[2])));
    c.save(&extra).unwrap();
    assert!(load_checkpoint::<f32>(&extra).is_err());
}
