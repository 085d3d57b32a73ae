//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use myoshape_core::fit::{fit_to_distance_map, fit_to_landmarks, FitConfig, InitPolicy};
use myoshape_core::geometry::{pose_denormalize, pose_normalize, radial_ring, LandmarkSet, Point, Pose};
use myoshape_core::gradcheck::Fixture;
use myoshape_core::losses::{
    contour_consistency, loss_b, loss_cc, loss_co, loss_distance, loss_landmarks, loss_pose,
    overlap_consistency, predicted_landmarks, soft_dice, LossWeights, OverlapFrame,
};
use myoshape_core::metrics::{
    boundary_distances, bootstrap_rank_test, classify_shape, dsc, pose_errors, shape_landmark_error,
    ShapeFlags,
};
use myoshape_core::quant::{lv_params_from_landmarks, lv_params_from_mask};
use myoshape_core::raster::{
    binarize, distance_map_from_landmarks, mask_from_landmarks, sigmoid_mask, BinaryMask, GridRole,
    GridSpec, ScalarGrid,
};
use myoshape_core::shape_model::{build_model, ShapeModel};
use myoshape_core::synth::{generate_population, normalized_shapes, SynthConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn training_model() -> (ShapeModel, Vec<LandmarkSet>) {
    let cases = generate_population(&SynthConfig {
        seed: 1,
        ..SynthConfig::default()
    })
    .expect("population");
    let shapes = normalized_shapes(&cases).expect("normalize");
    (build_model(&shapes, 2.0).expect("model"), shapes)
}

/// Targets from known coefficients within 2 SD and a random pose.
fn recovery_targets(model: &ShapeModel, n: usize, seed: u64) -> Vec<(Vec<f64>, Pose, LandmarkSet)> {
    let spec = GridSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let b: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..=2.0)).collect();
            let c = spec.center() + Point::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let pose = Pose::new(rng.random_range(-1.5..1.5), c);
            let p = predicted_landmarks(model, &b, &pose).expect("landmarks");
            (b, pose, p)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let inside = sigmoid_mask(-1.0, 5.0);
    let outside = sigmoid_mask(1.0, 5.0);
    check(
        (inside - 0.99331).abs() <= 1e-4 && (outside - 0.00669).abs() <= 1e-4,
        format!("S(-1) = {inside:.5}, S(+1) = {outside:.5}"),
    )
}

fn criterion_2() -> Outcome {
    let (model, shapes) = training_model();
    let k = model.modes();
    let mut worst_rt = 0.0_f64;
    let mut sum_sq = vec![0.0; k];
    for s in &shapes {
        let b = model.project(s, k).map_err(|e| e.to_string())?;
        let r = model.reconstruct(&b).map_err(|e| e.to_string())?;
        for (x, y) in r.to_vector().iter().zip(s.to_vector()) {
            worst_rt = worst_rt.max((x - y).abs());
        }
        for (acc, v) in sum_sq.iter_mut().zip(b.iter()) {
            *acc += v * v;
        }
    }
    let n = shapes.len() as f64;
    let worst_var = sum_sq
        .iter()
        .map(|s| (s / (n - 1.0) - 1.0).abs())
        .fold(0.0, f64::max);
    let ev = model.explained_variance(12).map_err(|e| e.to_string())?;
    check(
        worst_rt <= 1e-9 && worst_var <= 1e-6 && ev >= 0.99,
        format!(
            "{} shapes, {k} modes: round-trip err {worst_rt:.2e}, max |var-1| {worst_var:.2e}, explained(12) {ev:.4}",
            shapes.len()
        ),
    )
}

fn criterion_3() -> Outcome {
    let h = 1e-5;
    let fx = Fixture::new(7).map_err(|e| e.to_string())?;
    let model = &fx.model;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut note = |name: &'static str, e: f64| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some((_, w)) => *w = w.max(e),
        None => worst.push((name, e)),
    };
    let params = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut x = vec![
            rng.random_range(-1.0..1.0),
            fx.spec.center().x + rng.random_range(-1.5..1.5),
            fx.spec.center().y + rng.random_range(-1.5..1.5),
        ];
        x.extend((0..12).map(|_| rng.random_range(-1.5..1.5)));
        x
    };
    let split = |x: &[f64]| (x[3..].to_vec(), Pose { theta: x[0], cx: x[1], cy: x[2] });
    let flat = |g: &myoshape_core::losses::ParamGrad| {
        let mut v = vec![g.theta, g.center.x, g.center.y];
        v.extend(&g.b);
        v
    };
    // configurations whose landmarks sit away from bilinear cell edges
    let off_edge = |p: &LandmarkSet| {
        p.points().iter().all(|q| {
            let fx_ = q.x - q.x.floor();
            let fy_ = q.y - q.y.floor();
            fx_ > 1e-3 && fx_ < 1.0 - 1e-3 && fy_ > 1e-3 && fy_ < 1.0 - 1e-3
        })
    };

    for _ in 0..20 {
        let b_t: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b_p: Vec<f64> = (0..12).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g = loss_b(&b_t, &b_p).unwrap().1;
        note("L_b", common::rel_err(&g, &common::fd(&|x| loss_b(&b_t, x).unwrap().0, &b_p, h)));

        let truth = Pose::new(rng.random_range(-3.0..3.0), Point::new(rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)));
        let x0 = [rng.random_range(-3.0..3.0), rng.random_range(0.0..40.0), rng.random_range(0.0..40.0)];
        let pred = Pose { theta: x0[0], cx: x0[1], cy: x0[2] };
        let (_, gt, gc) = loss_pose(&truth, &pred, 1.0);
        let n = common::fd(&|x| loss_pose(&truth, &Pose { theta: x[0], cx: x[1], cy: x[2] }, 1.0).0, &x0, h);
        note("L_phi", common::rel_err(&[gt, gc.x, gc.y], &n));

        let xt = params(&mut rng);
        let (bt, pt) = split(&xt);
        let p_t = predicted_landmarks(model, &bt, &pt).unwrap();
        let x = params(&mut rng);
        let (b, pose) = split(&x);
        let g = flat(&loss_landmarks(model, &b, &pose, &p_t).unwrap().1);
        let n = common::fd(&|x| {
            let (b, pose) = split(x);
            loss_landmarks(model, &b, &pose, &p_t).unwrap().0
        }, &x, h);
        note("L_p", common::rel_err(&g, &n));

        let small = GridSpec::new(16, 16, 1.0);
        let d_t: Vec<f64> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
        let d_p: Vec<f64> = (0..256).map(|_| rng.random_range(-3.0..3.0)).collect();
        let gt_grid = ScalarGrid::new(small, GridRole::DistanceMap, d_t).unwrap();
        let grid = |v: &[f64]| ScalarGrid::new(small, GridRole::DistanceMap, v.to_vec()).unwrap();
        let g = loss_distance(&gt_grid, &grid(&d_p), 0.1, 5.0).unwrap().1;
        let n = common::fd(&|v| loss_distance(&gt_grid, &grid(v), 0.1, 5.0).unwrap().0, &d_p, h);
        note("L_D", common::rel_err(&g, &n));

        let a: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let g = soft_dice(&a, &s).unwrap().1;
        note("soft Dice", common::rel_err(&g, &common::fd(&|v| soft_dice(&a, v).unwrap().0, &s, h)));

        let xd = params(&mut rng);
        let (bd, pd) = split(&xd);
        let d_map = distance_map_from_landmarks(&predicted_landmarks(model, &bd, &pd).unwrap(), &fx.spec).unwrap();
        let x = loop {
            let x = params(&mut rng);
            let (b, pose) = split(&x);
            if off_edge(&predicted_landmarks(model, &b, &pose).unwrap()) {
                break x;
            }
        };
        let (b, pose) = split(&x);
        let (_, g, gd) = loss_cc(model, &d_map, &b, &pose).unwrap();
        let n = common::fd(&|x| {
            let (b, pose) = split(x);
            loss_cc(model, &d_map, &b, &pose).unwrap().0
        }, &x, h);
        note("L_Cc (b, phi)", common::rel_err(&flat(&g), &n));
        let spec = fx.spec;
        let as_grid = |v: &[f64]| ScalarGrid::new(spec, GridRole::DistanceMap, v.to_vec()).unwrap();
        let n = common::fd(&|v| loss_cc(model, &as_grid(v), &b, &pose).unwrap().0, &d_map.values, h);
        note("L_Cc (D)", common::rel_err(&gd, &n));

        let (_, _, gd) = loss_co(model, &fx.frame, &d_map, &b, &pose).unwrap();
        let n = common::fd(&|v| loss_co(model, &fx.frame, &as_grid(v), &b, &pose).unwrap().0, &d_map.values, h);
        note("L_Co (D)", common::rel_err(&gd, &n));
    }
    let ok = worst.iter().all(|(_, e)| *e <= 1e-4);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(ok, format!("20 configurations each; max rel err: {detail}"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst_rt = 0.0_f64;
    for _ in 0..100 {
        let pts: Vec<Point> = (0..36)
            .map(|_| Point::new(rng.random_range(0.0..128.0), rng.random_range(0.0..128.0)))
            .collect();
        let p = LandmarkSet::from_points(pts, 18).unwrap();
        let pose = Pose::new(rng.random_range(-3.1..3.1), Point::new(rng.random_range(0.0..128.0), rng.random_range(0.0..128.0)));
        let back = pose_denormalize(&pose_normalize(&p, &pose).unwrap(), &pose).unwrap();
        for (a, b) in back.points().iter().zip(p.points()) {
            worst_rt = worst_rt.max(a.distance(*b));
        }
    }

    let spec = GridSpec::default();
    let cases = generate_population(&SynthConfig {
        n_cases: 50,
        seed: 44,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut worst_cc = 0.0_f64;
    for c in &cases {
        let d = distance_map_from_landmarks(&c.landmarks, &spec).unwrap();
        worst_cc = worst_cc.max(contour_consistency(&d, &c.landmarks).value);
    }

    let (model, _) = training_model();
    let frame = OverlapFrame::new(&model, &spec, 5.0).unwrap();
    let mean = model.mean_shape();
    let floor = soft_dice(frame.mean_soft_mask(), frame.mean_soft_mask()).unwrap().0;
    let mut worst_co = 0.0_f64;
    for _ in 0..10 {
        let c = spec.center() + Point::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0));
        let pose = Pose::new(rng.random_range(-3.1..3.1), c);
        let p = pose_denormalize(&mean, &pose).unwrap();
        let d = distance_map_from_landmarks(&p, &spec).unwrap();
        worst_co = worst_co.max(overlap_consistency(&frame, &d, &p, c).unwrap().value);
    }
    check(
        worst_rt <= 1e-12 && worst_cc <= 0.05 && worst_co <= 0.02,
        format!("pose round-trip {worst_rt:.1e} px, max L_Cc {worst_cc:.4} px^2 (50 cases), max L_Co {worst_co:.4} (10 mean-shape cases; soft Dice of the mean-shape soft mask with itself {floor:.4})"),
    )
}

fn distance_fit_config(pose: Pose, cc: f64, co: f64) -> FitConfig {
    let mut w = LossWeights::none();
    w.gamma_cc = cc;
    w.gamma_co = co;
    w.gamma_phi = 1.0;
    w.mu_phi = 0.0;
    FitConfig {
        weights: w,
        modes: Some(12),
        init: InitPolicy::Provided { b: Vec::new(), pose },
        ..FitConfig::default()
    }
}

fn fitted_dsc(model: &ShapeModel, b: &[f64], pose: &Pose, d_t: &ScalarGrid) -> f64 {
    let p = predicted_landmarks(model, b, pose).unwrap();
    dsc(&mask_from_landmarks(&p, &d_t.spec).unwrap(), &binarize(d_t)).unwrap()
}

fn criterion_5() -> Outcome {
    let (model, _) = training_model();
    let spec = GridSpec::default();
    let targets = recovery_targets(&model, 50, 505);
    let (mut dc_max, mut dt_max, mut dp_max) = (0.0_f64, 0.0_f64, 0.0_f64);
    let (mut dpd_max, mut dsc_min) = (0.0_f64, 1.0_f64);
    for (_, pose, p_t) in &targets {
        let cfg = FitConfig {
            modes: Some(12),
            ..FitConfig::default()
        };
        let r = fit_to_landmarks(p_t, &model, &cfg).map_err(|e| e.to_string())?;
        let (dc, dt) = pose_errors(pose, &r.pose);
        dc_max = dc_max.max(dc);
        dt_max = dt_max.max(dt);
        dp_max = dp_max.max(shape_landmark_error(&model, &r.b, pose, p_t).unwrap());

        let d_t = distance_map_from_landmarks(p_t, &spec).unwrap();
        let r = fit_to_distance_map(&d_t, &model, None, &distance_fit_config(*pose, 1.0, 0.0))
            .map_err(|e| e.to_string())?;
        dpd_max = dpd_max.max(shape_landmark_error(&model, &r.b, pose, p_t).unwrap());
        dsc_min = dsc_min.min(fitted_dsc(&model, &r.b, &r.pose, &d_t));
    }
    check(
        dc_max <= 0.1 && dt_max <= 0.5 && dp_max <= 0.1 && dpd_max <= 0.5 && dsc_min >= 0.90,
        format!(
            "50 cases, worst case: landmarks fit dc {dc_max:.4} px, dtheta {dt_max:.4} deg, dp_b {dp_max:.4} px; \
             distance-map fit (L_Cc) dp_b {dpd_max:.4} px, DSC {dsc_min:.4}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let (model, _) = training_model();
    let spec = GridSpec::default();
    let frame = OverlapFrame::new(&model, &spec, 5.0).unwrap();
    let targets = recovery_targets(&model, 50, 606);
    let (mut wins_cc, mut wins_co) = (0, 0);
    let mut co_dsc = Vec::new();
    for (_, pose, p_t) in &targets {
        let d_t = distance_map_from_landmarks(p_t, &spec).unwrap();
        let run = |cc: f64, co: f64| -> Result<f64, String> {
            let r = fit_to_distance_map(&d_t, &model, Some(&frame), &distance_fit_config(*pose, cc, co))
                .map_err(|e| e.to_string())?;
            Ok(fitted_dsc(&model, &r.b, &r.pose, &d_t))
        };
        let base = run(0.0, 0.0)?;
        let cc = run(1.0, 0.0)?;
        let co = run(0.0, 10.0)?;
        wins_cc += (cc > base) as usize;
        wins_co += (co > base) as usize;
        co_dsc.push(co);
    }
    let mean_co = co_dsc.iter().sum::<f64>() / co_dsc.len() as f64;
    check(
        wins_cc >= 45 && wins_co >= 45,
        format!("DSC improved over prior-only in {wins_cc}/50 cases with L_Cc and {wins_co}/50 with L_Co (mean DSC with L_Co {mean_co:.4})"),
    )
}

fn annulus_mask(w: usize, c: Point, r0: f64, r1: f64) -> BinaryMask {
    BinaryMask::from_fn(w, w, |x, y| {
        let r = (x as f64 - c.x).hypot(y as f64 - c.y);
        r > r0 && r <= r1
    })
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mismatches = 0;
    let mut pairs = 0;
    while pairs < 100 {
        let w = rng.random_range(1..=16);
        let h = rng.random_range(1..=16);
        let da = rng.random_range(0.05..0.95);
        let db = rng.random_range(0.05..0.95);
        let a = common::random_mask(&mut rng, w, h, da);
        let b = common::random_mask(&mut rng, w, h, db);
        if a.count() == 0 || b.count() == 0 {
            continue;
        }
        pairs += 1;
        let d = dsc(&a, &b).unwrap();
        let (mbe, hd) = boundary_distances(&a, &b).unwrap();
        let (omb, ohd) = common::brute_boundary_distances(&a, &b);
        if d != common::brute_dsc(&a, &b) || mbe != omb || hd != ohd {
            mismatches += 1;
        }
    }

    let w = 48;
    let mut agree = 0;
    let mut total = 0;
    for family in 0..4 {
        for _ in 0..25 {
            let c = Point::new(rng.random_range(20.0..28.0), rng.random_range(20.0..28.0));
            let r0 = rng.random_range(5.0..8.0);
            let r1 = r0 + rng.random_range(3.0..6.0);
            let (mask, expected) = match family {
                0 => (annulus_mask(w, c, r0, r1), ShapeFlags::default()),
                1 => (
                    BinaryMask::from_fn(w, w, |x, y| (x as f64 - c.x).hypot(y as f64 - c.y) <= r1),
                    ShapeFlags { no_cavity: true, ..ShapeFlags::default() },
                ),
                2 => {
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let dir = Point::new(phi.cos(), phi.sin());
                    let mut m = annulus_mask(w, c, r0, r1);
                    for y in 0..w {
                        for x in 0..w {
                            let v = Point::new(x as f64, y as f64) - c;
                            if v.dot(dir) > 0.0 && v.cross(dir).abs() < 1.0 {
                                m.set(x, y, false);
                            }
                        }
                    }
                    (m, ShapeFlags { open_myocardium: true, ..ShapeFlags::default() })
                }
                _ => {
                    let mut m = annulus_mask(w, c, r0, r1);
                    let (bx, by) = (rng.random_range(0..3usize), rng.random_range(44..46usize));
                    for y in by..by + 3 {
                        for x in bx..bx + 3 {
                            m.set(x, y, true);
                        }
                    }
                    (m, ShapeFlags { multi_component: true, ..ShapeFlags::default() })
                }
            };
            let (components, enclosed) = common::flood_topology(&mask);
            let centre_bg = !mask.get(c.x.round() as usize, c.y.round() as usize);
            let oracle = ShapeFlags {
                empty: mask.count() == 0,
                multi_component: components > 1,
                no_cavity: !enclosed && !centre_bg,
                open_myocardium: !enclosed && centre_bg,
            };
            total += 1;
            if classify_shape(&mask) == oracle && oracle == expected {
                agree += 1;
            }
        }
    }
    check(
        mismatches == 0 && agree == total,
        format!("{pairs} random mask pairs, {mismatches} DSC/MBE/HD mismatches; classify_shape agrees on {agree}/{total} fixtures"),
    )
}

fn criterion_8() -> Outcome {
    let p = LandmarkSet::new(
        radial_ring(Point::new(64.0, 64.0), 0.0, 18, |_| 10.0),
        radial_ring(Point::new(64.0, 64.0), 0.0, 18, |_| 15.0),
    )
    .unwrap();
    let q = lv_params_from_landmarks(&p, 2.0).map_err(|e| e.to_string())?;
    let anchors = (q.a_lv - 1256.6).abs() / 1256.6 <= 0.01
        && (q.a_myo - 1570.8).abs() / 1570.8 <= 0.01
        && q.dim_lv.iter().all(|d| (d - 40.0).abs() <= 0.1)
        && q.rwt.iter().all(|r| (r - 10.0).abs() <= 0.01);

    let (model, _) = training_model();
    let spec = GridSpec::default();
    let mut errs = Vec::new();
    for (_, pose, p) in recovery_targets(&model, 50, 808) {
        let lm = lv_params_from_landmarks(&p, 2.0).map_err(|e| e.to_string())?;
        let mask = binarize(&distance_map_from_landmarks(&p, &spec).unwrap());
        let mk = lv_params_from_mask(&mask, pose.theta, 2.0).map_err(|e| e.to_string())?;
        errs.extend(lm.rwt.iter().zip(&mk.rwt).map(|(a, b)| (a - b).abs()));
    }
    let mae = errs.iter().sum::<f64>() / errs.len() as f64;
    check(
        anchors && mae <= 0.5,
        format!(
            "annulus A_LV {:.1} mm^2, A_MYO {:.1} mm^2, Dim {:.3} mm, RWT {:.4} mm; mask vs landmark RWT MAE {mae:.3} mm over 50 shapes",
            q.a_lv, q.a_myo, q.dim_lv[0], q.rwt[0]
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let a: Vec<f64> = (0..100).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p_same = bootstrap_rank_test(&a, &a, 10_000, 1).unwrap();
    let b: Vec<f64> = (0..100)
        .map(|_| 2.0 + Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    let p_shift = bootstrap_rank_test(&a, &b, 10_000, 2).unwrap();
    let trials = 200;
    let mut rejections = 0;
    for t in 0..trials {
        let x: Vec<f64> = (0..51).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..51).map(|_| StandardNormal.sample(&mut rng)).collect();
        if bootstrap_rank_test(&x, &y, 10_000, 1000 + t).unwrap() < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    check(
        p_same == 1.0 && p_shift < 0.001 && (0.02..=0.08).contains(&rate),
        format!("identical p = {p_same}, 2-SD shift p = {p_shift}, null rejection rate {rate:.3} over {trials} trials"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("soft-binarization anchor", criterion_1, Duration::from_secs(1)),
        ("PCA correctness", criterion_2, Duration::from_secs(10)),
        ("gradient suite", criterion_3, Duration::from_secs(60)),
        ("normalization and self-consistency round trips", criterion_4, Duration::from_secs(30)),
        ("recovery experiment", criterion_5, Duration::from_secs(300)),
        ("consistency-loss direction", criterion_6, Duration::from_secs(300)),
        ("metric oracles", criterion_7, Duration::from_secs(30)),
        ("quantification anchors", criterion_8, Duration::from_secs(60)),
        ("bootstrap test calibration", criterion_9, Duration::from_secs(120)),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *budget;
        let (status, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over the {budget:?} budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id} {name}: {status} ({detail}; {:.2}s)", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
