//! Loss terms for joint shape/pose/distance-map prediction, with analytic
//! gradients.
//!
//! | term                  | value                                              |
//! |-----------------------|----------------------------------------------------|
//! | shape                 | `(1/M) |b_t - b_p|^2`                               |
//! | pose                  | `-cos(theta_t - theta_p) + mu_phi/2 |c_t - c_p|^2` |
//! | landmarks             | `(1/N) |p_t - p_p|^2`                               |
//! | distance              | `softdice(S(D_t), S(D_p)) + mu_D/X |D_t - D_p|^2`  |
//! | contour consistency   | `(1/N) |D_p(p_p)|^2`, bilinear lookup              |
//! | overlap consistency   | `softdice(S_mean, S(a * warp(D_p)))`               |
//!
//! `p_p` is reconstructed from `(b_p, pose_p)` through the shape model, so the
//! landmark-based terms propagate gradients to `b`, `theta` and `c`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_denormalize, LandmarkSet, Point, Pose};
use crate::raster::{
    distance_map_from_landmarks, sigmoid_mask, GridSpec, ScalarGrid, DEFAULT_ALPHA,
};
use crate::shape_model::ShapeModel;
use crate::tps::{TpsBasis, WarpPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma_b: f64,
    pub gamma_phi: f64,
    pub gamma_p: f64,
    #[serde(rename = "gamma_D")]
    pub gamma_d: f64,
    pub gamma_cc: f64,
    pub gamma_co: f64,
    pub mu_phi: f64,
    #[serde(rename = "mu_D")]
    pub mu_d: f64,
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gamma_b: 1.0,
            gamma_phi: 1.0,
            gamma_p: 1.0,
            gamma_d: 100.0,
            gamma_cc: 1.0,
            gamma_co: 10.0,
            mu_phi: 1.0,
            mu_d: 0.1,
            alpha: DEFAULT_ALPHA,
        }
    }
}

impl LossWeights {
    /// All terms disabled; `mu` and `alpha` keep their defaults.
    pub fn none() -> Self {
        LossWeights {
            gamma_b: 0.0,
            gamma_phi: 0.0,
            gamma_p: 0.0,
            gamma_d: 0.0,
            gamma_cc: 0.0,
            gamma_co: 0.0,
            ..LossWeights::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gamma_b,
            self.gamma_phi,
            self.gamma_p,
            self.gamma_d,
            self.gamma_cc,
            self.gamma_co,
            self.mu_phi,
            self.mu_d,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Configuration("loss weights must be finite and >= 0".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Configuration("alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn weight(&self, term: LossTerm) -> f64 {
        match term {
            LossTerm::Shape => self.gamma_b,
            LossTerm::Pose => self.gamma_phi,
            LossTerm::Landmarks => self.gamma_p,
            LossTerm::Distance => self.gamma_d,
            LossTerm::ContourConsistency => self.gamma_cc,
            LossTerm::OverlapConsistency => self.gamma_co,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTerm {
    Shape,
    Pose,
    Landmarks,
    Distance,
    ContourConsistency,
    OverlapConsistency,
}

impl LossTerm {
    pub const ALL: [LossTerm; 6] = [
        LossTerm::Shape,
        LossTerm::Pose,
        LossTerm::Landmarks,
        LossTerm::Distance,
        LossTerm::ContourConsistency,
        LossTerm::OverlapConsistency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossTerm::Shape => "shape",
            LossTerm::Pose => "pose",
            LossTerm::Landmarks => "landmarks",
            LossTerm::Distance => "distance",
            LossTerm::ContourConsistency => "contour_consistency",
            LossTerm::OverlapConsistency => "overlap_consistency",
        }
    }
}

impl fmt::Display for LossTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Gradient with respect to the shape/pose parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad {
    pub b: Vec<f64>,
    pub theta: f64,
    pub center: Point,
}

impl ParamGrad {
    pub fn zeros(m: usize) -> Self {
        ParamGrad {
            b: vec![0.0; m],
            theta: 0.0,
            center: Point::ORIGIN,
        }
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, w: f64) {
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += w * b;
        }
        self.theta += w * other.theta;
        self.center = self.center + other.center * w;
    }
}

/// Landmarks `p = R(theta)^T (mean + sum b_m sqrt(lambda_m) v_m) + c`.
pub fn predicted_landmarks(model: &ShapeModel, b: &[f64], pose: &Pose) -> Result<LandmarkSet> {
    pose_denormalize(&model.reconstruct(b)?, pose)
}

/// Pulls `dL/dp` (image-frame landmarks) back onto `(b, theta, c)`.
pub fn chain_to_params(
    model: &ShapeModel,
    b_len: usize,
    pose: &Pose,
    p: &LandmarkSet,
    dp: &[Point],
) -> ParamGrad {
    let c = pose.center();
    let mut grad = ParamGrad::zeros(b_len);
    let ds: Vec<Point> = dp.iter().map(|g| pose.rotate_to_normalized(*g)).collect();
    for (m, gb) in grad.b.iter_mut().enumerate() {
        *gb = model
            .scaled_mode(m)
            .iter()
            .zip(&ds)
            .map(|(v, g)| v.dot(*g))
            .sum();
    }
    for (g, q) in dp.iter().zip(p.points()) {
        let r = *q - c;
        grad.theta += -g.x * r.y + g.y * r.x;
        grad.center = grad.center + *g;
    }
    grad
}

/// Mean squared coefficient error and its gradient with respect to `b_p`.
pub fn loss_b(b_t: &[f64], b_p: &[f64]) -> Result<(f64, Vec<f64>)> {
    if b_t.len() != b_p.len() {
        return Err(Error::invalid(format!(
            "coefficient lengths differ: {} vs {}",
            b_t.len(),
            b_p.len()
        )));
    }
    if b_t.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let m = b_t.len() as f64;
    let value = b_t.iter().zip(b_p).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / m;
    let grad = b_t.iter().zip(b_p).map(|(t, p)| -2.0 / m * (t - p)).collect();
    Ok((value, grad))
}

/// Cosine orientation loss plus weighted half squared center error.
/// Returns the value and `(d/dtheta_p, d/dc_p)`.
pub fn loss_pose(truth: &Pose, pred: &Pose, mu_phi: f64) -> (f64, f64, Point) {
    let dtheta = truth.theta - pred.theta;
    let dc = truth.center() - pred.center();
    let value = -dtheta.cos() + mu_phi * 0.5 * dc.norm_sq();
    // d/dtheta_p of -cos(theta_t - theta_p) = -sin(theta_t - theta_p)
    (value, -dtheta.sin(), dc * -mu_phi)
}

/// `(1/N) |p_t - p_p|^2` and its gradient with respect to each `p_p` point.
pub fn landmark_distance(p_t: &LandmarkSet, p_p: &LandmarkSet) -> Result<(f64, Vec<Point>)> {
    if p_t.len() != p_p.len() {
        return Err(Error::invalid("landmark counts differ"));
    }
    let n = p_t.len() as f64;
    let mut value = 0.0;
    let grad = p_t
        .points()
        .iter()
        .zip(p_p.points())
        .map(|(t, p)| {
            let d = *t - *p;
            value += d.norm_sq();
            d * (-2.0 / n)
        })
        .collect();
    Ok((value / n, grad))
}

/// Landmark loss for landmarks reconstructed from `(b_p, pose_p)`.
pub fn loss_landmarks(
    model: &ShapeModel,
    b_p: &[f64],
    pose_p: &Pose,
    p_t: &LandmarkSet,
) -> Result<(f64, ParamGrad)> {
    let p_p = predicted_landmarks(model, b_p, pose_p)?;
    let (value, dp) = landmark_distance(p_t, &p_p)?;
    Ok((value, chain_to_params(model, b_p.len(), pose_p, &p_p, &dp)))
}

/// `1 - 2 sum(a b) / (sum a + sum b)` and its gradient with respect to `b`.
/// Two all-zero inputs give loss 1 with a zero gradient.
pub fn soft_dice(a: &[f64], b: &[f64]) -> Result<(f64, Vec<f64>)> {
    if a.len() != b.len() {
        return Err(Error::invalid("soft Dice inputs differ in size"));
    }
    let inter: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let union: f64 = a.iter().sum::<f64>() + b.iter().sum::<f64>();
    if union <= 0.0 {
        return Ok((1.0, vec![0.0; b.len()]));
    }
    let value = 1.0 - 2.0 * inter / union;
    let u2 = union * union;
    let grad = a.iter().map(|&ak| -2.0 * (ak * union - inter) / u2).collect();
    Ok((value, grad))
}

/// Soft Dice between two grids.
pub fn soft_dice_grids(a: &ScalarGrid, b: &ScalarGrid) -> Result<(f64, Vec<f64>)> {
    if !a.same_shape(b) {
        return Err(Error::invalid("grid dimensions differ"));
    }
    soft_dice(&a.values, &b.values)
}

/// Soft Dice of the soft-binarized maps plus weighted MSE; gradient with
/// respect to `D_p`.
pub fn loss_distance(
    d_t: &ScalarGrid,
    d_p: &ScalarGrid,
    mu_d: f64,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    if !d_t.same_shape(d_p) {
        return Err(Error::invalid("distance map dimensions differ"));
    }
    let s_t: Vec<f64> = d_t.values.iter().map(|&d| sigmoid_mask(d, alpha)).collect();
    let s_p: Vec<f64> = d_p.values.iter().map(|&d| sigmoid_mask(d, alpha)).collect();
    let (dice, g_dice) = soft_dice(&s_t, &s_p)?;
    let x = d_t.values.len() as f64;
    let mut mse = 0.0;
    let grad = d_t
        .values
        .iter()
        .zip(&d_p.values)
        .zip(s_p.iter().zip(&g_dice))
        .map(|((t, p), (s, g))| {
            let diff = p - t;
            mse += diff * diff;
            g * (-alpha * s * (1.0 - s)) + mu_d * 2.0 * diff / x
        })
        .collect();
    Ok((dice + mu_d * mse / x, grad))
}

/// Output of the contour consistency term.
#[derive(Debug, Clone)]
pub struct ContourConsistency {
    pub value: f64,
    /// `dL/dp_p` per landmark.
    pub grad_points: Vec<Point>,
    /// `dL/dD_p`, dense.
    pub grad_distance: Vec<f64>,
}

/// `(1/N) sum_i D_p(p_i)^2` with bilinear, boundary-clamped lookup.
pub fn contour_consistency(d_p: &ScalarGrid, p_p: &LandmarkSet) -> ContourConsistency {
    let n = p_p.len() as f64;
    let mut value = 0.0;
    let mut grad_distance = vec![0.0; d_p.values.len()];
    let grad_points = p_p
        .points()
        .iter()
        .map(|q| {
            let s = d_p.bilinear(q.x, q.y);
            value += s.value * s.value;
            let k = 2.0 * s.value / n;
            for (idx, w) in s.taps {
                grad_distance[idx] += k * w;
            }
            Point::new(k * s.grad[0], k * s.grad[1])
        })
        .collect();
    ContourConsistency {
        value: value / n,
        grad_points,
        grad_distance,
    }
}

/// Contour consistency for landmarks reconstructed from `(b_p, pose_p)`;
/// returns the value, the parameter gradient and `dL/dD_p`.
pub fn loss_cc(
    model: &ShapeModel,
    d_p: &ScalarGrid,
    b_p: &[f64],
    pose_p: &Pose,
) -> Result<(f64, ParamGrad, Vec<f64>)> {
    let p_p = predicted_landmarks(model, b_p, pose_p)?;
    let cc = contour_consistency(d_p, &p_p);
    let grad = chain_to_params(model, b_p.len(), pose_p, &p_p, &cc.grad_points);
    Ok((cc.value, grad, cc.grad_distance))
}

/// Mean-shape reference frame for the overlap consistency term: the model
/// mean centered on a grid of the prediction's size, its soft mask, and the
/// tabulated TPS weights mapping that frame back onto predicted landmarks.
#[derive(Debug, Clone)]
pub struct OverlapFrame {
    spec: GridSpec,
    alpha: f64,
    mean_radius: f64,
    frame_landmarks: LandmarkSet,
    mean_soft_mask: Vec<f64>,
    plan: WarpPlan,
}

impl OverlapFrame {
    pub fn new(model: &ShapeModel, spec: &GridSpec, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha must be positive"));
        }
        let mean = model.mean_shape();
        let mean_radius = mean.points().iter().map(|q| q.norm()).sum::<f64>() / mean.len() as f64;
        let offset = spec.center();
        let frame_landmarks = mean.map(|q| q + offset)?;
        let d_mean = distance_map_from_landmarks(&frame_landmarks, spec)?;
        let mean_soft_mask = d_mean.values.iter().map(|&d| sigmoid_mask(d, alpha)).collect();
        let basis = TpsBasis::new(frame_landmarks.points(), 0.0)?;
        let plan = WarpPlan::new(&basis, spec)?;
        Ok(OverlapFrame {
            spec: *spec,
            alpha,
            mean_radius,
            frame_landmarks,
            mean_soft_mask,
            plan,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Mean shape landmarks in grid coordinates.
    pub fn frame_landmarks(&self) -> &LandmarkSet {
        &self.frame_landmarks
    }

    pub fn mean_soft_mask(&self) -> &[f64] {
        &self.mean_soft_mask
    }

    /// Positions in `D_p` sampled by each frame pixel for landmarks `p_p`.
    pub fn sample_positions(&self, p_p: &LandmarkSet) -> Vec<Point> {
        self.plan.map(p_p.points())
    }

    /// `a * warp(D_p)` in the mean-shape frame, together with `a`.
    pub fn warped_scaled(&self, d_p: &ScalarGrid, p_p: &LandmarkSet, c_p: Point) -> Result<(Vec<f64>, f64)> {
        let a = self.scale(p_p, c_p)?;
        let warped = self
            .plan
            .map(p_p.points())
            .iter()
            .map(|q| a * d_p.sample(*q))
            .collect();
        Ok((warped, a))
    }

    fn scale(&self, p_p: &LandmarkSet, c_p: Point) -> Result<f64> {
        let den = p_p.points().iter().map(|q| q.distance(c_p)).sum::<f64>() / p_p.len() as f64;
        if !(den > 0.0 && den.is_finite()) {
            return Err(Error::Degenerate("landmarks collapse onto the LV center".into()));
        }
        Ok(self.mean_radius / den)
    }
}

/// Output of the overlap consistency term.
#[derive(Debug, Clone)]
pub struct OverlapConsistency {
    pub value: f64,
    pub grad_points: Vec<Point>,
    /// Explicit dependence through the scale factor's center argument.
    pub grad_center: Point,
    pub grad_distance: Vec<f64>,
}

/// Soft Dice between the mean-shape soft mask and the soft mask of `D_p`
/// warped into the mean-shape frame and rescaled by the landmark spread.
pub fn overlap_consistency(
    frame: &OverlapFrame,
    d_p: &ScalarGrid,
    p_p: &LandmarkSet,
    c_p: Point,
) -> Result<OverlapConsistency> {
    if d_p.width() != frame.spec.width || d_p.height() != frame.spec.height {
        return Err(Error::invalid("distance map does not match the overlap frame"));
    }
    if p_p.len() != frame.frame_landmarks.len() {
        return Err(Error::invalid("landmark count does not match the model"));
    }
    let a = frame.scale(p_p, c_p)?;
    let alpha = frame.alpha;
    let mapped = frame.plan.map(p_p.points());
    let samples: Vec<_> = mapped.iter().map(|q| d_p.bilinear(q.x, q.y)).collect();
    let soft: Vec<f64> = samples
        .iter()
        .map(|s| sigmoid_mask(a * s.value, alpha))
        .collect();
    let (value, g_soft) = soft_dice(&frame.mean_soft_mask, &soft)?;

    let mut grad_distance = vec![0.0; d_p.values.len()];
    let mut grad_scale = 0.0;
    let pixel_grads: Vec<Point> = samples
        .iter()
        .zip(soft.iter().zip(&g_soft))
        .map(|(s, (sk, gk))| {
            // dL/dz with z = a * D^T
            let gz = gk * (-alpha * sk * (1.0 - sk));
            grad_scale += gz * s.value;
            let gd = gz * a;
            for (idx, w) in s.taps {
                grad_distance[idx] += gd * w;
            }
            Point::new(gd * s.grad[0], gd * s.grad[1])
        })
        .collect();

    let mut grad_points = frame.plan.pullback(&pixel_grads);
    // a = A / B with B = mean |p_i - c|
    let n = p_p.len() as f64;
    let den = p_p.points().iter().map(|q| q.distance(c_p)).sum::<f64>() / n;
    let mut grad_center = Point::ORIGIN;
    for (g, q) in grad_points.iter_mut().zip(p_p.points()) {
        let r = *q - c_p;
        let norm = r.norm();
        if norm > 0.0 {
            let da_dp = r * (-a / den / n / norm);
            *g = *g + da_dp * grad_scale;
            grad_center = grad_center - da_dp * grad_scale;
        }
    }
    Ok(OverlapConsistency {
        value,
        grad_points,
        grad_center,
        grad_distance,
    })
}

/// Overlap consistency for landmarks reconstructed from `(b_p, pose_p)`, with
/// `c_p` taken from the predicted pose.
pub fn loss_co(
    model: &ShapeModel,
    frame: &OverlapFrame,
    d_p: &ScalarGrid,
    b_p: &[f64],
    pose_p: &Pose,
) -> Result<(f64, ParamGrad, Vec<f64>)> {
    let p_p = predicted_landmarks(model, b_p, pose_p)?;
    let co = overlap_consistency(frame, d_p, &p_p, pose_p.center())?;
    let mut grad = chain_to_params(model, b_p.len(), pose_p, &p_p, &co.grad_points);
    grad.center = grad.center + co.grad_center;
    Ok((co.value, grad, co.grad_distance))
}

/// Ground-truth side of the total loss; only the fields required by the
/// enabled terms need to be present.
#[derive(Debug, Clone, Copy, Default)]
pub struct Truth<'a> {
    pub b: Option<&'a [f64]>,
    pub pose: Option<Pose>,
    pub landmarks: Option<&'a LandmarkSet>,
    pub distance: Option<&'a ScalarGrid>,
}

#[derive(Debug, Clone, Copy)]
pub struct Prediction<'a> {
    pub b: &'a [f64],
    pub pose: Pose,
    pub distance: Option<&'a ScalarGrid>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossContext<'a> {
    pub model: &'a ShapeModel,
    pub overlap: Option<&'a OverlapFrame>,
}

/// Accumulated gradients; a block is `None` when no enabled term touches it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub b: Option<Vec<f64>>,
    pub theta: Option<f64>,
    pub center: Option<Point>,
    pub distance: Option<Vec<f64>>,
}

impl Gradients {
    fn add_params(&mut self, g: &ParamGrad, w: f64) {
        let b = self.b.get_or_insert_with(|| vec![0.0; g.b.len()]);
        for (a, x) in b.iter_mut().zip(&g.b) {
            *a += w * x;
        }
        *self.theta.get_or_insert(0.0) += w * g.theta;
        let c = self.center.get_or_insert(Point::ORIGIN);
        *c = *c + g.center * w;
    }

    fn add_distance(&mut self, g: &[f64], w: f64) {
        let d = self.distance.get_or_insert_with(|| vec![0.0; g.len()]);
        for (a, x) in d.iter_mut().zip(g) {
            *a += w * x;
        }
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_none() && self.theta.is_none() && self.center.is_none() && self.distance.is_none()
    }
}

#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub total: f64,
    /// Unweighted value of every enabled term.
    pub terms: BTreeMap<LossTerm, f64>,
    pub grad: Gradients,
}

fn require<T>(v: Option<T>, what: &str, term: LossTerm) -> Result<T> {
    v.ok_or_else(|| Error::Configuration(format!("{term} loss is enabled but {what} is missing")))
}

/// Weighted sum of the enabled loss terms. Terms with zero weight are not
/// evaluated at all.
pub fn total_loss(
    ctx: &LossContext<'_>,
    truth: &Truth<'_>,
    pred: &Prediction<'_>,
    w: &LossWeights,
) -> Result<LossReport> {
    w.validate()?;
    let mut report = LossReport::default();
    let enabled = |t: LossTerm| w.weight(t) > 0.0;

    let needs_landmarks = [
        LossTerm::Landmarks,
        LossTerm::ContourConsistency,
        LossTerm::OverlapConsistency,
    ]
    .into_iter()
    .any(enabled);
    let p_p = if needs_landmarks {
        Some(predicted_landmarks(ctx.model, pred.b, &pred.pose)?)
    } else {
        None
    };

    for term in LossTerm::ALL.into_iter().filter(|t| enabled(*t)) {
        let gamma = w.weight(term);
        let value = match term {
            LossTerm::Shape => {
                let b_t = require(truth.b, "ground-truth coefficients", term)?;
                let (v, g) = loss_b(b_t, pred.b)?;
                let mut pg = ParamGrad::zeros(pred.b.len());
                pg.b = g;
                report.grad.add_params(&pg, gamma);
                v
            }
            LossTerm::Pose => {
                let pose_t = require(truth.pose, "ground-truth pose", term)?;
                let (v, gt, gc) = loss_pose(&pose_t, &pred.pose, w.mu_phi);
                let pg = ParamGrad {
                    b: vec![0.0; pred.b.len()],
                    theta: gt,
                    center: gc,
                };
                report.grad.add_params(&pg, gamma);
                v
            }
            LossTerm::Landmarks => {
                let p_t = require(truth.landmarks, "ground-truth landmarks", term)?;
                let p_p = p_p.as_ref().expect("reconstructed above");
                let (v, dp) = landmark_distance(p_t, p_p)?;
                let pg = chain_to_params(ctx.model, pred.b.len(), &pred.pose, p_p, &dp);
                report.grad.add_params(&pg, gamma);
                v
            }
            LossTerm::Distance => {
                let d_t = require(truth.distance, "ground-truth distance map", term)?;
                let d_p = require(pred.distance, "predicted distance map", term)?;
                let (v, g) = loss_distance(d_t, d_p, w.mu_d, w.alpha)?;
                report.grad.add_distance(&g, gamma);
                v
            }
            LossTerm::ContourConsistency => {
                let d_p = require(pred.distance, "predicted distance map", term)?;
                let p_p = p_p.as_ref().expect("reconstructed above");
                let cc = contour_consistency(d_p, p_p);
                let pg = chain_to_params(ctx.model, pred.b.len(), &pred.pose, p_p, &cc.grad_points);
                report.grad.add_params(&pg, gamma);
                report.grad.add_distance(&cc.grad_distance, gamma);
                cc.value
            }
            LossTerm::OverlapConsistency => {
                let d_p = require(pred.distance, "predicted distance map", term)?;
                let frame = require(ctx.overlap, "overlap frame", term)?;
                if (frame.alpha() - w.alpha).abs() > 0.0 {
                    return Err(Error::Configuration(
                        "overlap frame was built with a different alpha".into(),
                    ));
                }
                let p_p = p_p.as_ref().expect("reconstructed above");
                let co = overlap_consistency(frame, d_p, p_p, pred.pose.center())?;
                let mut pg =
                    chain_to_params(ctx.model, pred.b.len(), &pred.pose, p_p, &co.grad_points);
                pg.center = pg.center + co.grad_center;
                report.grad.add_params(&pg, gamma);
                report.grad.add_distance(&co.grad_distance, gamma);
                co.value
            }
        };
        if !value.is_finite() {
            return Err(Error::Degenerate(format!("{term} loss is not finite")));
        }
        report.terms.insert(term, value);
        report.total += gamma * value;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{GridRole, GridSpec};
    use std::f64::consts::PI;

    #[test]
    fn shape_loss_examples() {
        assert_eq!(loss_b(&[0.3, 0.1], &[0.3, 0.1]).unwrap().0, 0.0);
        let (v, g) = loss_b(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(g, vec![-1.0, 0.0]);
        assert!(loss_b(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pose_loss_examples() {
        let p = Pose::new(0.3, Point::new(4.0, 5.0));
        assert_eq!(loss_pose(&p, &p, 1.0).0, -1.0);
        let flipped = Pose {
            theta: p.theta + PI,
            ..p
        };
        assert!((loss_pose(&p, &flipped, 1.0).0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn landmark_loss_offset_example() {
        let pts: Vec<Point> = (0..36).map(|i| Point::new(i as f64, 2.0 * i as f64)).collect();
        let a = LandmarkSet::from_points(pts.clone(), 18).unwrap();
        let mut moved = pts;
        moved[7] = moved[7] + Point::new(3.0, 4.0);
        let b = LandmarkSet::from_points(moved, 18).unwrap();
        assert_eq!(landmark_distance(&a, &a).unwrap().0, 0.0);
        assert!((landmark_distance(&a, &b).unwrap().0 - 25.0 / 36.0).abs() < 1e-15);
    }

    #[test]
    fn soft_dice_examples() {
        let a = [1.0, 0.0, 1.0, 1.0];
        assert_eq!(soft_dice(&a, &a).unwrap().0, 0.0);
        // identical soft inputs leave sum a(1-a) / sum a
        let s = [0.2, 0.9, 0.5, 0.0];
        let expect = (0.16 + 0.09 + 0.25) / 1.6;
        assert!((soft_dice(&s, &s).unwrap().0 - expect).abs() < 1e-15);
        assert_eq!(soft_dice(&[1.0, 0.0], &[0.0, 1.0]).unwrap().0, 1.0);
        let (v, g) = soft_dice(&[0.0; 3], &[0.0; 3]).unwrap();
        assert_eq!(v, 1.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn distance_loss_examples() {
        let spec = GridSpec::new(4, 4, 1.0);
        let vals: Vec<f64> = (0..16).map(|i| i as f64 - 7.5).collect();
        let d_t = ScalarGrid::new(spec, GridRole::DistanceMap, vals.clone()).unwrap();
        let s_t: Vec<f64> = vals.iter().map(|&d| sigmoid_mask(d, 5.0)).collect();
        let self_dice = soft_dice(&s_t, &s_t).unwrap().0;
        assert!((loss_distance(&d_t, &d_t, 0.1, 5.0).unwrap().0 - self_dice).abs() < 1e-15);
        let d_p = ScalarGrid::new(spec, GridRole::DistanceMap, vals.iter().map(|v| v + 10.0).collect())
            .unwrap();
        let (v_mu, _) = loss_distance(&d_t, &d_p, 0.1, 5.0).unwrap();
        let (v_0, _) = loss_distance(&d_t, &d_p, 0.0, 5.0).unwrap();
        assert!((v_mu - v_0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_map_contour_consistency() {
        let spec = GridSpec::new(8, 8, 1.0);
        let d = ScalarGrid::filled(spec, GridRole::DistanceMap, 1.5);
        let pts: Vec<Point> = (0..6).map(|i| Point::new(1.3 + i as f64, 2.7)).collect();
        let p = LandmarkSet::from_points(pts, 3).unwrap();
        let cc = contour_consistency(&d, &p);
        assert!((cc.value - 2.25).abs() < 1e-15);
        assert!(cc.grad_points.iter().all(|g| g.norm() < 1e-15));
    }

    #[test]
    fn weights_default_and_validation() {
        let w = LossWeights::default();
        assert_eq!(
            [w.gamma_b, w.gamma_phi, w.gamma_p, w.gamma_d, w.gamma_cc, w.gamma_co, w.mu_phi, w.mu_d, w.alpha],
            [1.0, 1.0, 1.0, 100.0, 1.0, 10.0, 1.0, 0.1, 5.0]
        );
        let bad = LossWeights {
            gamma_b: -1.0,
            ..w
        };
        assert!(bad.validate().is_err());
        let json = serde_json::to_string(&w).unwrap();
        assert!(json.contains("\"gamma_D\"") && json.contains("\"mu_D\""));
    }
}
