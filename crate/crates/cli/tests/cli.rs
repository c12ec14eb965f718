//! End-to-end checks of the experiment pipeline: config handling, training
//! runs with logs/checkpoints/locks, resume equivalence, counterfactual
//! grids, evaluation results, and figure emission — all at a micro scale
//! that keeps every test fast.

use std::path::Path;

use cda_cli::{
    cmd_evaluate, cmd_generate, cmd_make_data, cmd_plot, cmd_train, parse_metrics, CliError,
    EvalOptions, ExperimentConfig, GenerateMode, LatentSource, Metric, Results, RunDir,
};
use cda_model::load_checkpoint;
use image::GenericImageView;
use ndarray::Array2;

const MICRO: &str = r#"
[dataset]
name = "morphomnist"
n = 96
resolution = 16
p_unlabeled = 0.0
seed = 3

[model]
latent_total = 4
encoder_channels = [8, 16]
encoder_hidden = 32
base_channels = 8
channel_mults = [1, 2]
emb_dim = 16
prior_hidden = 16
schedule = "linear"
t_count = 40

[train]
batch = 8
lr = 1e-3
iterations = 10
seed = 5
gamma_final = 0.5
gamma_anneal_steps = 4
clip_norm = 1.0
checkpoint_every = 5
log_every = 1

[sample]
ddim_steps = 8
cf_noise = "encode"
abduction = "mean"
omega = 1.0
seed = 0
"#;

fn micro() -> ExperimentConfig {
    ExperimentConfig::from_toml(MICRO, &[]).unwrap()
}

fn train_micro(root: &Path, name: &str) -> std::path::PathBuf {
    cmd_train(&micro(), root, name, false).unwrap()
}

#[test]
fn built_in_profiles_validate_for_every_dataset() {
    for name in cda_data::DatasetName::ALL {
        for kind in ["desk", "paper"] {
            let cfg = ExperimentConfig::profile(kind, name).unwrap();
            cfg.validate().unwrap();
            cfg.model_config().unwrap();
        }
    }
    assert!(ExperimentConfig::profile("huge", cda_data::DatasetName::Pendulum).is_err());
}

#[test]
fn misspelled_keys_fail_before_any_compute() {
    let bad = MICRO.replace("iterations = 10", "iteraitons = 10");
    let err = ExperimentConfig::from_toml(&bad, &[]).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert!(err.to_string().contains("schema"), "{err}");

    // Misspelled --set keys hit the same schema wall.
    let err = ExperimentConfig::from_toml(MICRO, &["train.iteraitons=5".into()]).unwrap_err();
    assert!(err.to_string().contains("schema"), "{err}");
    // And malformed override syntax is its own clear error.
    assert!(ExperimentConfig::from_toml(MICRO, &["no-equals-sign".into()]).is_err());
}

#[test]
fn set_overrides_reach_the_parsed_config() {
    let cfg = ExperimentConfig::from_toml(
        MICRO,
        &[
            "train.iterations=25".into(),
            "model.channel_mults=[1, 2]".into(),
            "sample.cf_noise=\"seeded\"".into(),
            "sample.abduction=seeded".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.train.iterations, 25);
    assert_eq!(cfg.model.channel_mults, vec![1, 2]);
    // Quoted and bare strings both work.
    assert_eq!(cfg.sample.cf_noise, "seeded");
    assert_eq!(cfg.sample.abduction, "seeded");
}

#[test]
fn invalid_settings_are_rejected() {
    for set in [
        "sample.omega=1.5",
        "sample.cf_noise=fresh",
        "train.batch=0",
        "model.latent_total=5",       // not divisible by 2 factors
        "dataset.name=\"imagenet\"",
        "sample.ddim_steps=100",      // more levels than t_count
    ] {
        assert!(
            ExperimentConfig::from_toml(MICRO, &[set.to_string()]).is_err(),
            "{set} should be rejected"
        );
    }
}

#[test]
fn make_data_builds_once_and_reuses_after() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = micro();
    let (path, built) = cmd_make_data(&cfg, tmp.path()).unwrap();
    assert!(built && path.exists());
    let (path2, built2) = cmd_make_data(&cfg, tmp.path()).unwrap();
    assert_eq!(path, path2);
    assert!(!built2);
}

#[test]
fn a_smoke_run_writes_snapshot_log_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let ckpt = train_micro(tmp.path(), "smoke");
    assert!(ckpt.exists());

    let rd = RunDir::open(&tmp.path().join("smoke")).unwrap();
    // 10 iterations at log_every=1 → exactly 10 records.
    assert_eq!(rd.log_lines().unwrap(), 10);
    // The snapshot round-trips to the exact config that ran.
    let snap = ExperimentConfig::load(&rd.config_path(), &[]).unwrap();
    assert_eq!(snap, micro());
    // The lock is released once training finishes.
    assert!(!tmp.path().join("smoke/LOCK").exists());
    // Starting over in the same directory without --resume is refused.
    let err = cmd_train(&micro(), tmp.path(), "smoke", false).unwrap_err();
    assert!(err.to_string().contains("--resume"), "{err}");
}

#[test]
fn a_locked_run_directory_refuses_a_second_trainer() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("held");
    let _held = RunDir::claim(&dir).unwrap();
    match cmd_train(&micro(), tmp.path(), "held", false) {
        Err(CliError::RunLocked(p)) => assert_eq!(p, dir),
        other => panic!("expected RunLocked, got {other:?}"),
    }
}

#[test]
fn identical_seeded_runs_are_bit_identical() {
    let (ta, tb) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ca = train_micro(ta.path(), "a");
    let cb = train_micro(tb.path(), "b");
    let log_a = std::fs::read_to_string(ta.path().join("a/log.txt")).unwrap();
    let log_b = std::fs::read_to_string(tb.path().join("b/log.txt")).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(std::fs::read(ca).unwrap(), std::fs::read(cb).unwrap());
}

#[test]
fn resuming_at_half_way_matches_training_straight_through() {
    let (ta, tb) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let straight = train_micro(ta.path(), "full");

    let mut half = micro();
    half.train.iterations = 5;
    cmd_train(&half, tb.path(), "resumed", false).unwrap();
    let resumed = cmd_train(&micro(), tb.path(), "resumed", true).unwrap();

    // Same final state, byte for byte, and the same loss history.
    assert_eq!(std::fs::read(straight).unwrap(), std::fs::read(resumed).unwrap());
    let log_a = std::fs::read_to_string(ta.path().join("full/log.txt")).unwrap();
    let log_b = std::fs::read_to_string(tb.path().join("resumed/log.txt")).unwrap();
    assert_eq!(log_a, log_b);

    // Resuming with a materially different config is refused.
    let mut other = micro();
    other.train.lr = 9e-1;
    let err = cmd_train(&other, tb.path(), "resumed", true).unwrap_err();
    assert!(err.to_string().contains("snapshot"), "{err}");
}

#[test]
fn numerical_blowup_halts_with_the_last_checkpoint_intact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = micro();
    cfg.train.lr = 1e30;
    cfg.train.clip_norm = None;
    cfg.train.checkpoint_every = 1;
    match cmd_train(&cfg, tmp.path(), "blowup", false) {
        Err(CliError::Numerical { step, .. }) => assert!(step >= 1),
        other => panic!("expected a numerical halt, got {other:?}"),
    }
    // The run left a loadable checkpoint from before the blow-up, and logged
    // the halt.
    let ckpt = load_checkpoint::<f32>(&tmp.path().join("blowup/checkpoint.bin")).unwrap();
    assert!(ckpt.step >= 1);
    let log = std::fs::read_to_string(tmp.path().join("blowup/log.txt")).unwrap();
    assert!(log.contains("event=halt"), "{log}");
}

#[test]
fn unknown_factors_and_out_of_range_values_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    train_micro(tmp.path(), "gen");
    let run = tmp.path().join("gen");

    let mode = GenerateMode::Do(vec![("waviness".into(), 1.0)]);
    match cmd_generate(tmp.path(), &run, &mode, 0, None, None) {
        Err(CliError::UnknownFactor { name, available }) => {
            assert_eq!(name, "waviness");
            assert_eq!(available, vec!["thickness".to_string(), "intensity".to_string()]);
        }
        other => panic!("expected UnknownFactor, got {other:?}"),
    }

    let mode = GenerateMode::Do(vec![("thickness".into(), 99.0)]);
    assert!(cmd_generate(tmp.path(), &run, &mode, 0, None, None).is_err());
    let mode = GenerateMode::Do(vec![("thickness".into(), 3.0)]);
    assert!(cmd_generate(tmp.path(), &run, &mode, 777, None, None).is_err());
}

#[test]
fn do_grids_are_1x3_and_sweep_grids_are_1x7() {
    let tmp = tempfile::tempdir().unwrap();
    train_micro(tmp.path(), "gen");
    let run = tmp.path().join("gen");

    let mode = GenerateMode::Do(vec![("thickness".into(), 3.0)]);
    let report = cmd_generate(tmp.path(), &run, &mode, 1, None, None).unwrap();
    let img = image::open(&report.png).unwrap();
    // Three 16px panels with two 2px gutters.
    assert_eq!(img.dimensions(), (3 * 16 + 2 * 2, 16));
    let sidecar = cda_cli::grid::GridSidecar::load(&report.png).unwrap();
    assert_eq!(sidecar.panels[0], "factual");
    assert_eq!(sidecar.panels[1], "reconstruction");
    assert!(sidecar.panels[2].starts_with("do(thickness"), "{:?}", sidecar.panels);
    assert_eq!(sidecar.sample_index, 1);

    let mode = GenerateMode::Sweep { factor: "thickness".into(), lo: 1.0, hi: 5.0, steps: 5 };
    let report = cmd_generate(tmp.path(), &run, &mode, 0, Some(0.5), None).unwrap();
    let img = image::open(&report.png).unwrap();
    assert_eq!(img.dimensions(), (7 * 16 + 6 * 2, 16));
    let sidecar = cda_cli::grid::GridSidecar::load(&report.png).unwrap();
    assert_eq!(sidecar.panels.len(), 7);
    assert_eq!(sidecar.omega, 0.5);
    // Swept panels are ordered low to high after factual and reconstruction.
    let swept: Vec<&String> = sidecar.interventions[2..].iter().collect();
    assert_eq!(
        swept,
        ["thickness=1.0000", "thickness=2.0000", "thickness=3.0000", "thickness=4.0000", "thickness=5.0000"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .iter()
            .collect::<Vec<_>>()
    );
}

#[test]
fn results_files_round_trip_and_reject_junk() {
    let mut r = Results::new();
    r.push("dci", 0.987654321);
    r.push("effectiveness.do_angle.shadow_pos", 0.03125);
    let text = r.to_text();
    assert_eq!(Results::parse(&text).unwrap(), r);

    // Comments and blank lines are tolerated; junk is not.
    let with_comments = format!("# header\n\n{text}");
    assert_eq!(Results::parse(&with_comments).unwrap(), r);
    assert!(Results::parse("no equals sign").is_err());
    assert!(Results::parse("dci = not-a-number").is_err());
    assert!(Results::parse("= 0.5").is_err());
}

#[test]
fn metric_lists_parse_and_reject_empty_or_unknown() {
    assert_eq!(
        parse_metrics("dci, effectiveness,omega-effect").unwrap(),
        vec![Metric::Dci, Metric::Effectiveness, Metric::OmegaEffect]
    );
    assert!(parse_metrics("").is_err());
    assert!(parse_metrics(" , ").is_err());
    assert!(parse_metrics("dci,fid").is_err());
}

#[test]
fn planted_perfect_latents_score_a_dci_of_one() {
    let tmp = tempfile::tempdir().unwrap();
    train_micro(tmp.path(), "planted");
    let run = tmp.path().join("planted");

    // Latents that copy each factor into its own block exactly (the rest
    // zero) are perfectly disentangled by construction.
    let cfg = micro();
    let test = cda_cli::test_dataset(&cfg, tmp.path(), 128).unwrap();
    let labels = test.labels_norm();
    let mut latents = Array2::<f64>::zeros((128, 4));
    for i in 0..128 {
        latents[[i, 0]] = labels[[i, 0]];
        latents[[i, 2]] = labels[[i, 1]];
    }
    let opts = EvalOptions {
        metrics: vec![Metric::Dci],
        test_n: 128,
        latents: LatentSource::Planted(latents),
        ..Default::default()
    };
    let path = cmd_evaluate(tmp.path(), &run, &opts, "planted").unwrap();
    let results = Results::load(&path).unwrap();
    assert_eq!(results.get("dci"), Some(1.0));
}

#[test]
fn full_evaluation_emits_every_metric_family_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    train_micro(tmp.path(), "eval");
    let run = tmp.path().join("eval");

    let opts = EvalOptions {
        test_n: 128,
        cf_samples: 3,
        predictor_steps: 400,
        ..Default::default()
    };
    let a = cmd_evaluate(tmp.path(), &run, &opts, "a").unwrap();
    let results = Results::load(&a).unwrap();
    for key in [
        "dci",
        "effectiveness.do_thickness.thickness",
        "effectiveness.do_thickness.intensity",
        "effectiveness.do_intensity.thickness",
        "effectiveness.do_intensity.intensity",
        "omega_effect.do_thickness.w0.2",
        "omega_effect.do_thickness.w0.5",
        "omega_effect.do_thickness.w1",
    ] {
        assert!(results.get(key).is_some(), "missing {key}");
    }
    for (key, value) in results.iter() {
        assert!(value.is_finite(), "{key} is not finite");
    }

    // A frozen checkpoint and fixed seeds give identical bytes on re-run.
    let b = cmd_evaluate(tmp.path(), &run, &opts, "b").unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn plots_cover_all_figure_kinds_and_reject_metricless_input() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = tmp.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let full = write(
        "results-full.txt",
        "dci = 0.95\n\
         effectiveness.do_angle.angle = 0.05\n\
         effectiveness.do_angle.shadow_pos = 0.10\n\
         effectiveness.do_shadow_pos.angle = 0.02\n\
         effectiveness.do_shadow_pos.shadow_pos = 0.04\n\
         omega_effect.do_angle.w0.2 = 0.01\n\
         omega_effect.do_angle.w0.5 = 0.05\n\
         omega_effect.do_angle.w1 = 0.09\n",
    );

    // One fully populated results file → all three figures.
    let figs = cmd_plot(&[full.clone()], &tmp.path().join("figs")).unwrap();
    assert_eq!(figs.len(), 3);
    let names: Vec<String> = figs
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert!(names.contains(&"dci-bars.svg".to_string()), "{names:?}");
    assert!(names.contains(&"effectiveness-full.svg".to_string()), "{names:?}");
    assert!(names.contains(&"omega-effect-full.svg".to_string()), "{names:?}");
    for fig in &figs {
        let text = std::fs::read_to_string(fig).unwrap();
        assert!(text.starts_with("<svg"), "{fig:?}");
    }

    // Two runs → grouped bars with a legend naming both.
    let other = write("results-other.txt", "dci = 0.80\n");
    let figs = cmd_plot(&[full, other], &tmp.path().join("figs2")).unwrap();
    let bars = std::fs::read_to_string(
        figs.iter().find(|p| p.ends_with("dci-bars.svg")).unwrap(),
    )
    .unwrap();
    assert!(bars.contains(">full<") && bars.contains(">other<"), "legend missing a run");

    // Identical plotting inputs give identical bytes.
    let again = cmd_plot(
        &[tmp.path().join("results-full.txt"), tmp.path().join("results-other.txt")],
        &tmp.path().join("figs3"),
    )
    .unwrap();
    assert_eq!(
        std::fs::read(&figs[0]).unwrap(),
        std::fs::read(&again[0]).unwrap()
    );

    // A results file with no recognizable metrics cannot be plotted.
    let junk = write("results-junk.txt", "something_else = 1.0\n");
    assert!(matches!(
        cmd_plot(&[junk], &tmp.path().join("figs4")),
        Err(CliError::Parse(_))
    ));
    assert!(cmd_plot(&[], &tmp.path().join("figs5")).is_err());
}

#[test]
fn the_binary_wires_the_subcommands_together() {
    let tmp = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_cda");
    let run = |args: &[&str]| {
        std::process::Command::new(bin)
            .arg("--root")
            .arg(tmp.path())
            .args(args)
            .output()
            .unwrap()
    };

    let out = run(&[
        "make-data",
        "--dataset",
        "morphomnist",
        "--set",
        "dataset.n=16",
        "--set",
        "dataset.resolution=16",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("built"));

    let out = run(&[
        "make-data",
        "--dataset",
        "morphomnist",
        "--set",
        "dataset.n=16",
        "--set",
        "dataset.resolution=16",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("exists"));

    // Bad invocations fail with a non-zero exit and an error message.
    let out = run(&["make-data", "--dataset", "imagenet"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = run(&["evaluate", "--run", "nope", "--metrics", ""]);
    assert!(!out.status.success());
}
