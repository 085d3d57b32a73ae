//! Direct first-order fitting of shape coefficients and pose to a target
//! landmark set or distance map.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, LandmarkSet, Point, Pose};
use crate::losses::{
    loss_cc, loss_co, loss_landmarks, loss_pose, LossTerm, LossWeights, OverlapFrame, ParamGrad,
};
use crate::raster::{binarize, ScalarGrid};
use crate::shape_model::{ShapeCoeffs, ShapeModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitPolicy {
    /// `b = 0`, `theta = 0`, center at the target centroid.
    MeanShape,
    Provided { b: Vec<f64>, pose: Pose },
    /// Uniform `b` in `[-1, 1]` per mode, otherwise as `MeanShape`.
    RandomWithinModel { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub weights: LossWeights,
    pub max_iters: usize,
    /// Step size for `theta` (radians) and `c` (pixels).
    pub lr_pose: f64,
    pub lr_b: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Multiplicative step-size decay applied every iteration.
    pub lr_decay: f64,
    pub tol: f64,
    /// Consecutive iterations below `tol` needed to stop.
    pub patience: usize,
    /// Number of modes to fit; all model modes when `None`.
    pub modes: Option<usize>,
    pub init: InitPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            weights: LossWeights::default(),
            max_iters: 2000,
            lr_pose: 0.05,
            lr_b: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay: 0.997,
            tol: 1e-8,
            patience: 20,
            modes: None,
            init: InitPolicy::MeanShape,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        for (name, v) in [("lr_pose", self.lr_pose), ("lr_b", self.lr_b), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1)")));
            }
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::invalid("lr_decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total: f64,
    /// Unweighted term values.
    pub terms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub b: ShapeCoeffs,
    pub pose: Pose,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn final_total(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.total)
    }
}

/// Adaptive-moment optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub params: Vec<f64>,
    /// Per-parameter step size.
    pub lr: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(params: Vec<f64>, lr: Vec<f64>) -> Result<Self> {
        if params.len() != lr.len() {
            return Err(Error::invalid("parameter and step-size lengths differ"));
        }
        let n = params.len();
        Ok(AdamState {
            params,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected adaptive-moment update. `lr_scale` multiplies every
/// step size.
pub fn optimizer_step(
    mut state: AdamState,
    grads: &[f64],
    cfg: &FitConfig,
    lr_scale: f64,
) -> Result<AdamState> {
    if grads.len() != state.params.len() {
        return Err(Error::invalid("gradient length does not match parameters"));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            iteration: state.t as usize,
            trace: Vec::new(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..grads.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        state.params[i] -= lr_scale * state.lr[i] * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(state)
}

/// Value, unweighted terms and parameter gradient of a fitting objective.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub total: f64,
    pub terms: Vec<(LossTerm, f64)>,
    pub grad: ParamGrad,
}

impl Evaluation {
    pub fn grad_norm(&self) -> f64 {
        let g = &self.grad;
        (g.b.iter().map(|x| x * x).sum::<f64>() + g.theta * g.theta + g.center.norm_sq()).sqrt()
    }
}

fn add_pose_prior(
    eval: &mut Evaluation,
    prior: Option<&Pose>,
    pose: &Pose,
    w: &LossWeights,
) {
    let Some(prior) = prior else { return };
    if w.gamma_phi <= 0.0 {
        return;
    }
    let (v, gt, gc) = loss_pose(prior, pose, w.mu_phi);
    eval.total += w.gamma_phi * v;
    eval.terms.push((LossTerm::Pose, v));
    eval.grad.theta += w.gamma_phi * gt;
    eval.grad.center = eval.grad.center + gc * w.gamma_phi;
}

/// Landmark objective `gamma_p L_p`, optionally with a pose prior.
pub struct LandmarkObjective<'a> {
    pub model: &'a ShapeModel,
    pub target: &'a LandmarkSet,
    pub weights: LossWeights,
    pub prior: Option<Pose>,
}

impl LandmarkObjective<'_> {
    pub fn evaluate(&self, b: &[f64], pose: &Pose) -> Result<Evaluation> {
        let w = &self.weights;
        let (v, g) = loss_landmarks(self.model, b, pose, self.target)?;
        let mut grad = ParamGrad::zeros(b.len());
        grad.add_scaled(&g, w.gamma_p);
        let mut eval = Evaluation {
            total: w.gamma_p * v,
            terms: vec![(LossTerm::Landmarks, v)],
            grad,
        };
        add_pose_prior(&mut eval, self.prior.as_ref(), pose, w);
        Ok(eval)
    }
}

/// Consistency objective against a fixed distance map:
/// `gamma_Cc L_Cc + gamma_Co L_Co + gamma_phi L_phi(prior)`.
pub struct DistanceObjective<'a> {
    pub model: &'a ShapeModel,
    pub target: &'a ScalarGrid,
    pub frame: Option<&'a OverlapFrame>,
    pub weights: LossWeights,
    pub prior: Option<Pose>,
}

impl DistanceObjective<'_> {
    pub fn evaluate(&self, b: &[f64], pose: &Pose) -> Result<Evaluation> {
        let w = &self.weights;
        let mut eval = Evaluation {
            total: 0.0,
            terms: Vec::new(),
            grad: ParamGrad::zeros(b.len()),
        };
        if w.gamma_cc > 0.0 {
            let (v, g, _) = loss_cc(self.model, self.target, b, pose)?;
            eval.total += w.gamma_cc * v;
            eval.terms.push((LossTerm::ContourConsistency, v));
            eval.grad.add_scaled(&g, w.gamma_cc);
        }
        if w.gamma_co > 0.0 {
            let frame = self.frame.ok_or_else(|| {
                Error::Configuration("overlap consistency needs an overlap frame".into())
            })?;
            let (v, g, _) = loss_co(self.model, frame, self.target, b, pose)?;
            eval.total += w.gamma_co * v;
            eval.terms.push((LossTerm::OverlapConsistency, v));
            eval.grad.add_scaled(&g, w.gamma_co);
        }
        add_pose_prior(&mut eval, self.prior.as_ref(), pose, w);
        Ok(eval)
    }
}

fn initial_params(model: &ShapeModel, modes: usize, centroid: Point, init: &InitPolicy) -> Result<(Vec<f64>, Pose)> {
    match init {
        InitPolicy::MeanShape => Ok((vec![0.0; modes], Pose::new(0.0, centroid))),
        InitPolicy::Provided { b, pose } => {
            pose.validate()?;
            if b.len() > model.modes() {
                return Err(Error::invalid("initial coefficients exceed the model modes"));
            }
            let mut b = b.clone();
            b.resize(modes, 0.0);
            Ok((b, *pose))
        }
        InitPolicy::RandomWithinModel { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let b = (0..modes).map(|_| rng.random_range(-1.0..=1.0)).collect();
            Ok((b, Pose::new(0.0, centroid)))
        }
    }
}

fn resolve_modes(model: &ShapeModel, cfg: &FitConfig) -> Result<usize> {
    let modes = cfg.modes.unwrap_or(model.modes());
    if modes == 0 || modes > model.modes() {
        return Err(Error::invalid(format!(
            "cannot fit {modes} modes with a {}-mode model",
            model.modes()
        )));
    }
    Ok(modes)
}

/// Runs the optimizer on `objective` from `(b0, pose0)`.
pub fn minimize(
    objective: impl Fn(&[f64], &Pose) -> Result<Evaluation>,
    b0: Vec<f64>,
    pose0: Pose,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let m = b0.len();
    let mut params = vec![pose0.theta, pose0.cx, pose0.cy];
    params.extend(b0);
    let mut lr = vec![cfg.lr_pose; 3];
    lr.extend(std::iter::repeat_n(cfg.lr_b, m));
    let mut state = AdamState::new(params, lr)?;
    let mut trace = Vec::new();
    let mut calm = 0usize;
    let mut converged = false;
    let mut lr_scale = 1.0;
    let unpack = |p: &[f64]| (Pose::new(p[0], Point::new(p[1], p[2])), p[3..].to_vec());

    for iteration in 0..cfg.max_iters {
        let (pose, b) = unpack(&state.params);
        let eval = objective(&b, &pose)?;
        let entry = TraceEntry {
            iteration,
            total: eval.total,
            terms: eval
                .terms
                .iter()
                .map(|(t, v)| (t.name().to_string(), *v))
                .collect(),
        };
        let finite = eval.total.is_finite();
        let prev = trace.last().map(|e: &TraceEntry| e.total);
        trace.push(entry);
        if !finite {
            return Err(Error::Divergence { iteration, trace });
        }
        if let Some(prev) = prev {
            if (eval.total - prev).abs() < cfg.tol {
                calm += 1;
            } else {
                calm = 0;
            }
            if calm >= cfg.patience {
                converged = true;
                break;
            }
        }
        let mut grads = vec![eval.grad.theta, eval.grad.center.x, eval.grad.center.y];
        grads.extend(&eval.grad.b);
        state = match optimizer_step(state, &grads, cfg, lr_scale) {
            Ok(s) => s,
            Err(Error::Divergence { .. }) => return Err(Error::Divergence { iteration, trace }),
            Err(e) => return Err(e),
        };
        state.params[0] = wrap_angle(state.params[0]);
        lr_scale *= cfg.lr_decay;
    }
    let (pose, b) = unpack(&state.params);
    Ok(FitResult {
        b: ShapeCoeffs(b),
        pose,
        iterations: trace.len(),
        trace,
        converged,
    })
}

/// Fits `(b, pose)` to target landmarks by minimizing the landmark loss.
pub fn fit_to_landmarks(p_t: &LandmarkSet, model: &ShapeModel, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    model.validate()?;
    if p_t.len() != model.n_landmarks() || p_t.n_endo() != model.n_endo {
        return Err(Error::invalid("target landmarks do not match the model layout"));
    }
    if p_t.points().iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("non-finite target landmark"));
    }
    if !(cfg.weights.gamma_p > 0.0) {
        return Err(Error::Configuration("landmark fitting needs gamma_p > 0".into()));
    }
    let modes = resolve_modes(model, cfg)?;
    let (b0, pose0) = initial_params(model, modes, p_t.centroid(), &cfg.init)?;
    let objective = LandmarkObjective {
        model,
        target: p_t,
        weights: cfg.weights.clone(),
        prior: None,
    };
    minimize(|b, pose| objective.evaluate(b, pose), b0, pose0, cfg)
}

/// Fits `(b, pose)` so that the reconstructed contour agrees with a fixed
/// distance map. When `gamma_phi > 0` the initial pose acts as a prior.
pub fn fit_to_distance_map(
    d_t: &ScalarGrid,
    model: &ShapeModel,
    frame: Option<&OverlapFrame>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    model.validate()?;
    let w = &cfg.weights;
    if !(w.gamma_cc > 0.0 || w.gamma_co > 0.0) && !(w.gamma_phi > 0.0) {
        return Err(Error::Configuration(
            "distance-map fitting needs gamma_Cc, gamma_Co or gamma_phi > 0".into(),
        ));
    }
    if d_t.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite distance map value"));
    }
    let centroid = binarize(d_t)
        .centroid()
        .ok_or_else(|| Error::invalid("distance map has no foreground"))?;
    let modes = resolve_modes(model, cfg)?;
    let (b0, pose0) = initial_params(model, modes, centroid, &cfg.init)?;
    let owned;
    let frame = match frame {
        Some(f) => Some(f),
        None if w.gamma_co > 0.0 => {
            owned = OverlapFrame::new(model, &d_t.spec, w.alpha)?;
            Some(&owned)
        }
        None => None,
    };
    let objective = DistanceObjective {
        model,
        target: d_t,
        frame,
        weights: w.clone(),
        prior: Some(pose0),
    };
    minimize(|b, pose| objective.evaluate(b, pose), b0, pose0, cfg)
}
