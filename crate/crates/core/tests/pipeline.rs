mod common;

use std::f64::consts::{FRAC_PI_2, PI};

use myoshape_core::fit::{fit_to_distance_map, fit_to_landmarks, FitConfig, InitPolicy, LandmarkObjective};
use myoshape_core::geometry::{radial_ring, LandmarkSet, Point, Pose};
use myoshape_core::losses::{contour_consistency, overlap_consistency, predicted_landmarks, LossWeights, OverlapFrame};
use myoshape_core::metrics::{pose_errors, shape_landmark_error};
use myoshape_core::quant::{lv_params_from_landmarks, mae_and_correlation};
use myoshape_core::raster::{distance_map_from_landmarks, GridRole, GridSpec, ScalarGrid};
use myoshape_core::shape_model::{build_model, ShapeModel};
use myoshape_core::synth::{generate_population, make_case_bundle, normalized_shapes, SynthConfig};

fn model() -> ShapeModel {
    let cases = generate_population(&SynthConfig {
        n_cases: 100,
        seed: 11,
        ..SynthConfig::default()
    })
    .unwrap();
    build_model(&normalized_shapes(&cases).unwrap(), 2.0).unwrap()
}

fn truth(m: &ShapeModel) -> (Vec<f64>, Pose, LandmarkSet) {
    let b = vec![1.2, -0.8, 0.5, 1.5, -1.1, 0.3, 0.0, -0.4, 0.9, -1.7, 0.2, 0.6];
    let pose = Pose::new(0.7, Point::new(70.0, 58.0));
    let p = predicted_landmarks(m, &b, &pose).unwrap();
    (b, pose, p)
}

#[test]
fn true_parameters_are_a_fixed_point() {
    let m = model();
    let (b, pose, p) = truth(&m);
    let obj = LandmarkObjective {
        model: &m,
        target: &p,
        weights: LossWeights { gamma_p: 1.0, ..LossWeights::none() },
        prior: None,
    };
    let e = obj.evaluate(&b, &pose).unwrap();
    assert!(e.total < 1e-20, "{}", e.total);
    assert!(e.grad_norm() <= 1e-3, "{}", e.grad_norm());
}

#[test]
fn landmark_fit_recovers_a_quarter_turn() {
    let m = model();
    let (b, pose, p) = truth(&m);
    let cfg = FitConfig {
        modes: Some(12),
        init: InitPolicy::Provided {
            b: vec![0.0; 12],
            pose: Pose::new(pose.theta + FRAC_PI_2, pose.center()),
        },
        ..FitConfig::default()
    };
    let r = fit_to_landmarks(&p, &m, &cfg).unwrap();
    let (dc, dt) = pose_errors(&pose, &r.pose);
    assert!(dt <= 1.0, "dtheta {dt}");
    assert!(dc <= 0.1, "dc {dc}");
    assert!(shape_landmark_error(&m, &r.b, &pose, &p).unwrap() <= 0.1);
    let _ = b;
}

#[test]
fn fits_are_deterministic() {
    let m = model();
    let (_, pose, p) = truth(&m);
    let cfg = FitConfig { modes: Some(12), ..FitConfig::default() };
    let a = fit_to_landmarks(&p, &m, &cfg).unwrap();
    let b = fit_to_landmarks(&p, &m, &cfg).unwrap();
    assert_eq!(a.b, b.b);
    assert_eq!(a.pose, b.pose);
    assert_eq!(a.iterations, b.iterations);

    let d = distance_map_from_landmarks(&p, &GridSpec::default()).unwrap();
    let mut w = LossWeights::none();
    w.gamma_cc = 1.0;
    w.gamma_phi = 1.0;
    w.mu_phi = 0.0;
    let cfg = FitConfig {
        weights: w,
        modes: Some(12),
        max_iters: 200,
        init: InitPolicy::Provided { b: Vec::new(), pose },
        ..FitConfig::default()
    };
    let x = fit_to_distance_map(&d, &m, None, &cfg).unwrap();
    let y = fit_to_distance_map(&d, &m, None, &cfg).unwrap();
    assert_eq!(x.b, y.b);
    assert_eq!(x.trace.len(), y.trace.len());
}

#[test]
fn trace_totals_are_finite_and_converge() {
    let m = model();
    let (_, _, p) = truth(&m);
    let r = fit_to_landmarks(&p, &m, &FitConfig { modes: Some(12), ..FitConfig::default() }).unwrap();
    assert!(r.converged);
    assert!(r.trace.iter().all(|t| t.total.is_finite()));
    assert!(r.final_total() < r.trace[0].total);
}

#[test]
fn inverted_distance_map_fails_overlap_consistency() {
    let m = model();
    let spec = GridSpec::default();
    let frame = OverlapFrame::new(&m, &spec, 5.0).unwrap();
    let (_, pose, p) = truth(&m);
    let d = distance_map_from_landmarks(&p, &spec).unwrap();
    let inv = ScalarGrid::new(spec, GridRole::DistanceMap, d.values.iter().map(|v| -v).collect()).unwrap();
    let value = overlap_consistency(&frame, &inv, &p, pose.center()).unwrap().value;
    assert!(value >= 0.9, "{value}");
}

#[test]
fn case_bundles_are_self_consistent() {
    let m = model();
    let spec = GridSpec::default();
    let cases = generate_population(&SynthConfig {
        n_cases: 8,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    for c in &cases {
        let bundle = make_case_bundle(c, &m, &spec).unwrap();
        assert!(contour_consistency(&bundle.distance, &bundle.landmarks).value <= 0.05);
        // full-rank coefficients reproduce the landmarks
        let err = shape_landmark_error(&m, &bundle.b, &bundle.pose, &bundle.landmarks).unwrap();
        assert!(err < 1e-8, "{err}");
        let fg = bundle.mask.count();
        assert!(fg > 0 && fg < spec.pixel_count());
    }
}

#[test]
fn ellipse_quantification_matches_closed_form() {
    let c = Point::new(64.0, 64.0);
    let ellipse = |a: f64, b: f64| {
        move |phi: f64| a * b / ((b * phi.cos()).powi(2) + (a * phi.sin()).powi(2)).sqrt()
    };
    let p = LandmarkSet::new(
        radial_ring(c, 0.0, 18, ellipse(12.0, 9.0)),
        radial_ring(c, 0.0, 18, ellipse(16.0, 13.0)),
    )
    .unwrap();
    let q = lv_params_from_landmarks(&p, 1.5).unwrap();
    let a_lv = PI * 12.0 * 9.0 * 1.5 * 1.5;
    let a_myo = PI * (16.0 * 13.0 - 12.0 * 9.0) * 1.5 * 1.5;
    assert!((q.a_lv - a_lv).abs() / a_lv < 0.01, "{} vs {a_lv}", q.a_lv);
    assert!((q.a_myo - a_myo).abs() / a_myo < 0.01, "{} vs {a_myo}", q.a_myo);
    // the first diameter pair lies on the major axis
    let major = 2.0 * 12.0 * 1.5;
    let minor = 2.0 * 9.0 * 1.5;
    assert!(q.dim_lv[0] < major + 1e-9 && q.dim_lv[0] > minor);
}

#[test]
fn mae_and_correlation_match_textbook() {
    let a = [1.0, 2.0, 4.0, 7.0, 11.0, 3.5];
    let b = [1.5, 1.0, 5.0, 6.0, 12.5, 2.0];
    let (mae, r) = mae_and_correlation(&a, &b).unwrap();
    let expected_mae = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / 6.0;
    assert!((mae - expected_mae).abs() < 1e-12);
    assert!((r - common::pearson(&a, &b)).abs() < 1e-12);
}
