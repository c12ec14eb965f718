//! Ground-truth counterfactual labels: agreement with the generators,
//! identity under empty interventions, noise preservation, and validation.

use cda_data::{
    circuit_intensities, counterfactual_labels, light_quantile, pressed_buttons,
    sample_morphomnist_scm, sample_pendulum_scm, DatasetName,
};

#[test]
fn pendulum_do_angle_matches_the_generator_exactly() {
    let (y1, y2) = (16.0, 113.0);
    let (y3, y4) = sample_pendulum_scm(y1, y2).unwrap();
    for v in [-30.0, 0.0, 25.5] {
        let out = counterfactual_labels(DatasetName::Pendulum, &[y1, y2, y3, y4], &[(0, v)])
            .unwrap();
        let (m3, m4) = sample_pendulum_scm(v, y2).unwrap();
        assert_eq!(out, vec![v, y2, m3, m4], "shadow must recompute exactly via the generator");
    }
}

#[test]
fn pendulum_do_shadow_clamps_only_that_factor() {
    let (y1, y2) = (-12.0, 80.0);
    let (y3, y4) = sample_pendulum_scm(y1, y2).unwrap();
    let out =
        counterfactual_labels(DatasetName::Pendulum, &[y1, y2, y3, y4], &[(2, 7.25)]).unwrap();
    assert_eq!(out, vec![y1, y2, 7.25, y4], "a sink assignment touches nothing else");
}

#[test]
fn empty_interventions_return_the_factual_labels() {
    let (y1, y2) = (30.0, 140.0);
    let (y3, y4) = sample_pendulum_scm(y1, y2).unwrap();
    let out = counterfactual_labels(DatasetName::Pendulum, &[y1, y2, y3, y4], &[]).unwrap();
    assert_eq!(out, vec![y1, y2, y3, y4]);

    let circuit = [0.5, 0.31, 0.74, 0.55];
    let out = counterfactual_labels(DatasetName::CircuitLite, &circuit, &[]).unwrap();
    assert_eq!(out.as_slice(), circuit.as_slice(), "unchanged means keep the draws bitwise");

    let (t, i) = sample_morphomnist_scm(2.0, -0.3);
    let out = counterfactual_labels(DatasetName::MorphoMnist, &[t, i], &[]).unwrap();
    assert_eq!(out[0], t);
    assert!((out[1] - i).abs() < 1e-9, "curve inversion roundtrip, got {} want {i}", out[1]);
}

#[test]
fn morphomnist_thickness_edit_preserves_the_intensity_noise() {
    // Same exogenous intensity noise, two thicknesses: the counterfactual of
    // the thin sample at the thick value must equal the thick sample.
    let u_i = 0.8;
    let (t_thin, i_thin) = sample_morphomnist_scm(1.0, u_i);
    let (t_thick, i_thick) = sample_morphomnist_scm(4.0, u_i);
    let out =
        counterfactual_labels(DatasetName::MorphoMnist, &[t_thin, i_thin], &[(0, t_thick)])
            .unwrap();
    assert!(
        (out[1] - i_thick).abs() < 1e-9,
        "replaying the noise at the new thickness should land on the generator, got {} want {i_thick}",
        out[1]
    );
    // Monotone response: thicker strokes never get dimmer.
    assert!(i_thick > i_thin);
}

#[test]
fn morphomnist_do_intensity_is_a_sink_assignment() {
    let (t, i) = sample_morphomnist_scm(2.5, 0.0);
    let out = counterfactual_labels(DatasetName::MorphoMnist, &[t, i], &[(1, 200.0)]).unwrap();
    assert_eq!(out, vec![t, 200.0]);
}

#[test]
fn circuit_light_keeps_its_quantile_when_the_arm_moves() {
    // Factual arm presses green (0.5); move it to press blue (0.75): the
    // green light's mean drops from 0.8 to 0.2 and its draw must keep its
    // quantile within the Beta family.
    let factual = [0.5, 0.30, 0.71, 0.62];
    let out = counterfactual_labels(DatasetName::CircuitLite, &factual, &[(0, 0.75)]).unwrap();
    assert_eq!(out[0], 0.75);

    let pressed_f = pressed_buttons(factual[0]);
    let pressed_s = pressed_buttons(0.75);
    assert_eq!((pressed_f, pressed_s), ((false, true, false), (false, false, true)));
    let (_, vg_f, vb_f) = circuit_intensities(pressed_f, 0.0, 0.0);
    let (_, vg_s, vb_s) = circuit_intensities(pressed_s, 0.0, 0.0);

    // Blue mean rises (0.2 -> 0.8): the draw moves up; green falls.
    assert!(out[1] > factual[1], "blue light must brighten, got {}", out[1]);
    assert!(out[2] < factual[2], "green light must dim, got {}", out[2]);
    for (y_f, y_s, v_f, v_s) in [
        (factual[1], out[1], vb_f, vb_s),
        (factual[2], out[2], vg_f, vg_s),
    ] {
        let q_f = light_quantile(y_f, v_f);
        let q_s = light_quantile(y_s, v_s);
        assert!(
            (q_f - q_s).abs() < 1e-8,
            "quantile must be preserved: {q_f} vs {q_s}"
        );
    }

    // The red light listens to the realized blue and green intensities.
    let (vr_f, _, _) = circuit_intensities(pressed_f, factual[1], factual[2]);
    let (vr_s, _, _) = circuit_intensities(pressed_s, out[1], out[2]);
    let q_f = light_quantile(factual[3], vr_f);
    let q_s = light_quantile(out[3], vr_s);
    assert!((q_f - q_s).abs() < 1e-8, "red quantile must be preserved: {q_f} vs {q_s}");
}

#[test]
fn label_and_intervention_validation() {
    let ok = [0.5, 0.3, 0.7, 0.6];
    assert!(counterfactual_labels(DatasetName::CircuitLite, &ok[..3], &[]).is_err());
    assert!(counterfactual_labels(DatasetName::CircuitLite, &ok, &[(4, 0.0)]).is_err());
    assert!(counterfactual_labels(DatasetName::CircuitLite, &ok, &[(1, f64::NAN)]).is_err());
    assert!(
        counterfactual_labels(DatasetName::CircuitLite, &ok, &[(1, 0.5), (1, 0.6)]).is_err()
    );
    assert!(counterfactual_labels(DatasetName::Pendulum, &[1.0, f64::NAN, 1.0, 1.0], &[]).is_err());
}
