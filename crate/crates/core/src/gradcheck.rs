//! Central finite-difference checks of every analytic loss gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Point, Pose};
use crate::losses::{
    loss_b, loss_cc, loss_co, loss_distance, loss_landmarks, loss_pose, predicted_landmarks,
    soft_dice, OverlapFrame, ParamGrad,
};
use crate::raster::{distance_map_from_landmarks, GridRole, GridSpec, ScalarGrid};
use crate::shape_model::{build_model, ShapeModel};
use crate::synth::{generate_population, normalized_shapes, SynthConfig};

pub const FD_STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
const MODES: usize = 12;
const MAX_DRAWS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckRow {
    pub term: String,
    pub param_block: String,
    pub max_rel_err: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= TOLERANCE
    }
}

/// `max_k |a_k - n_k| / max(|a|_inf, |n|_inf, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let scale = inf(analytic).max(inf(numeric)).max(1e-8);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + h;
            let up = f(&probe)?;
            probe[k] = x[k] - h;
            let down = f(&probe)?;
            probe[k] = x[k];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Fixture shared by the model-dependent checks: a 12-mode model on a
/// 32 x 32 grid at 4 mm.
pub struct Fixture {
    pub model: ShapeModel,
    pub spec: GridSpec,
    pub frame: OverlapFrame,
}

impl Fixture {
    pub fn new(seed: u64) -> Result<Self> {
        let spec = GridSpec::new(32, 32, 4.0);
        let cfg = SynthConfig {
            n_cases: 60,
            grid: spec,
            center_range_mm: 8.0,
            seed,
            ..SynthConfig::default()
        };
        let cases = generate_population(&cfg)?;
        let model = build_model(&normalized_shapes(&cases)?, spec.pixel_size_mm)?;
        let frame = OverlapFrame::new(&model, &spec, crate::raster::DEFAULT_ALPHA)?;
        Ok(Fixture { model, spec, frame })
    }

    fn random_params(&self, rng: &mut ChaCha8Rng, spread: f64) -> (Vec<f64>, Pose) {
        let b = (0..MODES).map(|_| rng.random_range(-spread..spread)).collect();
        let c = self.spec.center() + Point::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        (b, Pose::new(rng.random_range(-1.0..1.0), c))
    }
}

fn pack(b: &[f64], pose: &Pose) -> Vec<f64> {
    let mut x = vec![pose.theta, pose.cx, pose.cy];
    x.extend_from_slice(b);
    x
}

fn unpack(x: &[f64]) -> (Vec<f64>, Pose) {
    (x[3..].to_vec(), Pose { theta: x[0], cx: x[1], cy: x[2] })
}

fn grad_blocks(g: &ParamGrad) -> [(&'static str, Vec<f64>); 3] {
    [
        ("b", g.b.clone()),
        ("theta", vec![g.theta]),
        ("c", vec![g.center.x, g.center.y]),
    ]
}

fn numeric_blocks(n: &[f64]) -> [Vec<f64>; 3] {
    [n[3..].to_vec(), vec![n[0]], n[1..3].to_vec()]
}

fn same_cells(a: &[Point], b: &[Point]) -> bool {
    a.iter()
        .zip(b)
        .all(|(p, q)| p.x.floor() == q.x.floor() && p.y.floor() == q.y.floor())
}

/// True when no bilinear sample moves to another grid cell under any single
/// parameter perturbation of size `h`.
fn kink_free(x: &[f64], h: f64, positions: impl Fn(&[f64]) -> Result<Vec<Point>>) -> Result<bool> {
    let base = positions(x)?;
    let mut probe = x.to_vec();
    for k in 0..x.len() {
        for s in [h, -h] {
            probe[k] = x[k] + s;
            if !same_cells(&base, &positions(&probe)?) {
                return Ok(false);
            }
        }
        probe[k] = x[k];
    }
    Ok(true)
}

struct Tracker(Vec<GradCheckRow>);

impl Tracker {
    fn record(&mut self, term: &str, block: &str, err: f64) {
        match self.0.iter_mut().find(|r| r.term == term && r.param_block == block) {
            Some(r) => r.max_rel_err = r.max_rel_err.max(err),
            None => self.0.push(GradCheckRow {
                term: term.into(),
                param_block: block.into(),
                max_rel_err: err,
            }),
        }
    }
}

fn random_grid(rng: &mut ChaCha8Rng, spec: GridSpec, lo: f64, hi: f64) -> ScalarGrid {
    let values = (0..spec.pixel_count()).map(|_| rng.random_range(lo..hi)).collect();
    ScalarGrid::new(spec, GridRole::DistanceMap, values).expect("sized to spec")
}

/// Runs every check at `configs` random configurations and reports the
/// worst relative error per term and parameter block.
pub fn run_suite(seed: u64, configs: usize) -> Result<Vec<GradCheckRow>> {
    if configs == 0 {
        return Err(Error::invalid("need at least one configuration"));
    }
    let h = FD_STEP;
    let fx = Fixture::new(seed)?;
    let model = &fx.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Tracker(Vec::new());

    for _ in 0..configs {
        // shape coefficients
        let b_t: Vec<f64> = (0..MODES).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b_p: Vec<f64> = (0..MODES).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (_, g) = loss_b(&b_t, &b_p)?;
        let n = central_difference(|x| Ok(loss_b(&b_t, x)?.0), &b_p, h)?;
        out.record("shape", "b", relative_error(&g, &n));

        // pose
        let truth = Pose::new(rng.random_range(-3.0..3.0), Point::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)));
        let pred = Pose::new(rng.random_range(-3.0..3.0), Point::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)));
        let mu = rng.random_range(0.1..2.0);
        let (_, gt, gc) = loss_pose(&truth, &pred, mu);
        let f = |x: &[f64]| Ok(loss_pose(&truth, &Pose { theta: x[0], cx: x[1], cy: x[2] }, mu).0);
        let n = central_difference(f, &[pred.theta, pred.cx, pred.cy], h)?;
        out.record("pose", "theta", relative_error(&[gt], &n[..1]));
        out.record("pose", "c", relative_error(&[gc.x, gc.y], &n[1..]));

        // landmarks
        let (b_true, pose_true) = fx.random_params(&mut rng, 2.0);
        let p_t = predicted_landmarks(model, &b_true, &pose_true)?;
        let (b0, pose0) = fx.random_params(&mut rng, 2.0);
        let (_, g) = loss_landmarks(model, &b0, &pose0, &p_t)?;
        let f = |x: &[f64]| {
            let (b, pose) = unpack(x);
            Ok(loss_landmarks(model, &b, &pose, &p_t)?.0)
        };
        let n = central_difference(f, &pack(&b0, &pose0), h)?;
        for ((block, a), nb) in grad_blocks(&g).into_iter().zip(numeric_blocks(&n)) {
            out.record("landmarks", block, relative_error(&a, &nb));
        }

        // distance-map loss on a 16 x 16 grid
        let small = GridSpec::new(16, 16, 1.0);
        let d_t = random_grid(&mut rng, small, -3.0, 3.0);
        let d_p = random_grid(&mut rng, small, -3.0, 3.0);
        let (_, g) = loss_distance(&d_t, &d_p, 0.1, 5.0)?;
        let f = |x: &[f64]| {
            let grid = ScalarGrid::new(small, GridRole::DistanceMap, x.to_vec())?;
            Ok(loss_distance(&d_t, &grid, 0.1, 5.0)?.0)
        };
        let n = central_difference(f, &d_p.values, h)?;
        out.record("distance", "D", relative_error(&g, &n));

        // soft Dice
        let a: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: Vec<f64> = (0..256).map(|_| rng.random_range(0.0..1.0)).collect();
        let (_, g) = soft_dice(&a, &s)?;
        let n = central_difference(|x| Ok(soft_dice(&a, x)?.0), &s, h)?;
        out.record("soft_dice", "S", relative_error(&g, &n));

        // contour consistency: D from one model shape, landmarks from a nearby one
        let (b_d, pose_d) = fx.random_params(&mut rng, 1.5);
        let d_p = distance_map_from_landmarks(&predicted_landmarks(model, &b_d, &pose_d)?, &fx.spec)?;
        let x0 = draw_kink_free(&mut rng, &fx, |x| {
            let (b, pose) = unpack(x);
            Ok(predicted_landmarks(model, &b, &pose)?.points().to_vec())
        })?;
        let (b0, pose0) = unpack(&x0);
        let (_, g, gd) = loss_cc(model, &d_p, &b0, &pose0)?;
        let f = |x: &[f64]| {
            let (b, pose) = unpack(x);
            Ok(loss_cc(model, &d_p, &b, &pose)?.0)
        };
        let n = central_difference(f, &x0, h)?;
        for ((block, a), nb) in grad_blocks(&g).into_iter().zip(numeric_blocks(&n)) {
            out.record("contour_consistency", block, relative_error(&a, &nb));
        }
        let fd = |x: &[f64]| {
            let grid = ScalarGrid::new(fx.spec, GridRole::DistanceMap, x.to_vec())?;
            Ok(loss_cc(model, &grid, &b0, &pose0)?.0)
        };
        let n = central_difference(fd, &d_p.values, h)?;
        out.record("contour_consistency", "D", relative_error(&gd, &n));

        // overlap consistency
        let x0 = draw_kink_free(&mut rng, &fx, |x| {
            let (b, pose) = unpack(x);
            Ok(fx.frame.sample_positions(&predicted_landmarks(model, &b, &pose)?))
        })?;
        let (b0, pose0) = unpack(&x0);
        let (_, g, gd) = loss_co(model, &fx.frame, &d_p, &b0, &pose0)?;
        let f = |x: &[f64]| {
            let (b, pose) = unpack(x);
            Ok(loss_co(model, &fx.frame, &d_p, &b, &pose)?.0)
        };
        let n = central_difference(f, &x0, h)?;
        for ((block, a), nb) in grad_blocks(&g).into_iter().zip(numeric_blocks(&n)) {
            out.record("overlap_consistency", block, relative_error(&a, &nb));
        }
        let fd = |x: &[f64]| {
            let grid = ScalarGrid::new(fx.spec, GridRole::DistanceMap, x.to_vec())?;
            Ok(loss_co(model, &fx.frame, &grid, &b0, &pose0)?.0)
        };
        let n = central_difference(fd, &d_p.values, h)?;
        out.record("overlap_consistency", "D", relative_error(&gd, &n));
    }
    Ok(out.0)
}

fn draw_kink_free(
    rng: &mut ChaCha8Rng,
    fx: &Fixture,
    positions: impl Fn(&[f64]) -> Result<Vec<Point>>,
) -> Result<Vec<f64>> {
    for _ in 0..MAX_DRAWS {
        let (b, pose) = fx.random_params(rng, 1.5);
        let x = pack(&b, &pose);
        if kink_free(&x, FD_STEP, &positions)? {
            return Ok(x);
        }
    }
    Err(Error::Degenerate("no configuration away from bilinear cell edges".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0, 2.0], &[1.0, 2.2]) - 0.2 / 2.2).abs() < 1e-15);
        assert_eq!(relative_error(&[0.0], &[0.0]), 0.0);
    }

    #[test]
    fn central_difference_of_cubic() {
        let g = central_difference(|x| Ok(x[0].powi(3) + 2.0 * x[1]), &[2.0, 1.0], 1e-5).unwrap();
        assert!((g[0] - 12.0).abs() < 1e-8 && (g[1] - 2.0).abs() < 1e-8);
    }
}
