//! PCA point distribution model over pose-normalized landmark sets.
//!
//! Shapes are approximated as `s = mean + sum_m b_m sqrt(lambda_m) v_m`, so the
//! coefficients of the training shapes have unit sample variance per mode.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, LandmarkSet, Point, Pose};

/// Eigenvalues below `PROJECTION_RANK_CUTOFF * lambda_1` are treated as zero.
pub const PROJECTION_RANK_CUTOFF: f64 = 1e-12;

/// Default number of predicted modes.
pub const DEFAULT_MODES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeModel {
    pub n_endo: usize,
    pub pixel_size_mm: f64,
    /// Stacked `[x..., y...]` mean of the pose-normalized shapes.
    pub mean: Vec<f64>,
    /// Descending, non-negative.
    pub eigenvalues: Vec<f64>,
    /// One unit column per eigenvalue.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Standardized mode weights `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ShapeCoeffs(pub Vec<f64>);

impl ShapeCoeffs {
    pub fn zeros(m: usize) -> Self {
        ShapeCoeffs(vec![0.0; m])
    }

    pub fn unit(m: usize, mode: usize) -> Self {
        let mut b = vec![0.0; m];
        b[mode] = 1.0;
        ShapeCoeffs(b)
    }
}

impl Deref for ShapeCoeffs {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ShapeCoeffs {
    fn from(v: Vec<f64>) -> Self {
        ShapeCoeffs(v)
    }
}

/// Builds the model from pose-normalized training shapes.
///
/// Eigenpairs come from the symmetric eigendecomposition of the sample
/// covariance (`1/(n-1)` normalization) and each eigenvector is signed so that
/// its largest-magnitude entry is positive.
pub fn build_model(shapes: &[LandmarkSet], pixel_size_mm: f64) -> Result<ShapeModel> {
    if shapes.len() < 2 {
        return Err(Error::invalid("model needs at least 2 shapes"));
    }
    if !(pixel_size_mm.is_finite() && pixel_size_mm > 0.0) {
        return Err(Error::invalid("pixel size must be positive"));
    }
    let n_endo = shapes[0].n_endo();
    if shapes.iter().any(|s| s.n_endo() != n_endo) {
        return Err(Error::invalid("training shapes have inconsistent lengths"));
    }
    let n = shapes.len();
    let dim = 4 * n_endo;
    let vectors: Vec<Vec<f64>> = shapes.iter().map(LandmarkSet::to_vector).collect();
    let mut mean = vec![0.0; dim];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let scale = vectors.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = cov.symmetric_eigen();
    // eigenvalues at rounding level of the data are exact zeros
    let floor = (dim as f64 * f64::EPSILON * scale).powi(2);

    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let lambda = if lambda > floor { lambda } else { 0.0 };
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            let pivot = v
                .iter()
                .copied()
                .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (lambda, v)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.truncate(n.min(dim));

    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(ShapeModel {
        n_endo,
        pixel_size_mm,
        mean,
        eigenvalues,
        eigenvectors,
    })
}

impl ShapeModel {
    /// Number of retained modes K.
    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Total landmark count N.
    pub fn n_landmarks(&self) -> usize {
        2 * self.n_endo
    }

    pub fn mean_shape(&self) -> LandmarkSet {
        LandmarkSet::from_vector(&self.mean, self.n_endo).expect("model mean has a valid layout")
    }

    /// `sqrt(lambda_m) v_m` as per-landmark displacement points.
    pub fn scaled_mode(&self, m: usize) -> Vec<Point> {
        let n = self.n_landmarks();
        let scale = self.eigenvalues[m].max(0.0).sqrt();
        let v = &self.eigenvectors[m];
        (0..n)
            .map(|i| Point::new(v[i] * scale, v[n + i] * scale))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = 4 * self.n_endo;
        if self.n_endo == 0 || self.mean.len() != dim {
            return Err(Error::invalid("model mean has wrong length"));
        }
        if self.eigenvectors.len() != self.eigenvalues.len() || self.modes() > dim {
            return Err(Error::invalid("eigenvector/eigenvalue count mismatch"));
        }
        if self.eigenvectors.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("eigenvector has wrong length"));
        }
        if self.eigenvalues.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return Err(Error::invalid("eigenvalues must be finite and non-negative"));
        }
        if self.eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("eigenvalues must be sorted descending"));
        }
        Ok(())
    }

    /// `s = mean + sum_m b_m sqrt(lambda_m) v_m` over the first `len(b)` modes.
    pub fn reconstruct(&self, b: &[f64]) -> Result<LandmarkSet> {
        if b.len() > self.modes() {
            return Err(Error::invalid(format!(
                "{} coefficients for a model with {} modes",
                b.len(),
                self.modes()
            )));
        }
        if b.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("non-finite shape coefficient"));
        }
        let mut s = self.mean.clone();
        for (m, &bm) in b.iter().enumerate() {
            let w = bm * self.eigenvalues[m].sqrt();
            for (si, vi) in s.iter_mut().zip(&self.eigenvectors[m]) {
                *si += w * vi;
            }
        }
        LandmarkSet::from_vector(&s, self.n_endo)
    }

    /// `b_m = v_m . (s - mean) / sqrt(lambda_m)` for the first `modes` modes.
    pub fn project(&self, s: &LandmarkSet, modes: usize) -> Result<ShapeCoeffs> {
        if modes > self.modes() {
            return Err(Error::invalid(format!(
                "requested {modes} modes from a model with {}",
                self.modes()
            )));
        }
        if s.n_endo() != self.n_endo {
            return Err(Error::invalid("shape does not match model landmark count"));
        }
        let cutoff = PROJECTION_RANK_CUTOFF * self.eigenvalues.first().copied().unwrap_or(0.0);
        let x = s.to_vector();
        let mut b = Vec::with_capacity(modes);
        for m in 0..modes {
            let lambda = self.eigenvalues[m];
            if lambda <= cutoff || lambda <= 0.0 {
                return Err(Error::Rank { mode: m });
            }
            let dot: f64 = self.eigenvectors[m]
                .iter()
                .zip(x.iter().zip(&self.mean))
                .map(|(v, (xi, mi))| v * (xi - mi))
                .sum();
            b.push(dot / lambda.sqrt());
        }
        Ok(ShapeCoeffs(b))
    }

    /// Fraction of total variance captured by the first `modes` modes.
    pub fn explained_variance(&self, modes: usize) -> Result<f64> {
        if modes > self.modes() {
            return Err(Error::invalid(format!(
                "requested {modes} modes from a model with {}",
                self.modes()
            )));
        }
        let total: f64 = self.eigenvalues.iter().sum();
        if total <= 0.0 {
            return Err(Error::UndefinedVariance);
        }
        Ok(self.eigenvalues[..modes].iter().sum::<f64>() / total)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ShapeModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }
}

/// Half-widths of the uniform augmentation offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentRanges {
    /// Per-mode coefficient offset, in standard deviations.
    pub coeff: f64,
    /// Per-axis translation, in millimetres.
    pub position_mm: f64,
    pub theta_rad: f64,
}

impl Default for AugmentRanges {
    fn default() -> Self {
        AugmentRanges {
            coeff: 1.0,
            position_mm: 40.0,
            theta_rad: PI / 2.0,
        }
    }
}

impl AugmentRanges {
    pub fn zero() -> Self {
        AugmentRanges {
            coeff: 0.0,
            position_mm: 0.0,
            theta_rad: 0.0,
        }
    }
}

fn symmetric_uniform<R: Rng + ?Sized>(rng: &mut R, half_width: f64) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..half_width)
    }
}

/// Model-guided augmentation: independent uniform offsets on every shape
/// coefficient, both center coordinates and the orientation.
pub fn augment<R: Rng + ?Sized>(
    model: &ShapeModel,
    b: &[f64],
    pose: &Pose,
    rng: &mut R,
    ranges: &AugmentRanges,
) -> Result<(ShapeCoeffs, Pose)> {
    let AugmentRanges {
        coeff,
        position_mm,
        theta_rad,
    } = *ranges;
    if [coeff, position_mm, theta_rad]
        .iter()
        .any(|r| !(r.is_finite() && *r >= 0.0))
    {
        return Err(Error::invalid("augmentation ranges must be finite and non-negative"));
    }
    pose.validate()?;
    let b_aug = b.iter().map(|&bm| bm + symmetric_uniform(rng, coeff)).collect();
    let position_px = position_mm / model.pixel_size_mm;
    let dx = symmetric_uniform(rng, position_px);
    let dy = symmetric_uniform(rng, position_px);
    let dtheta = symmetric_uniform(rng, theta_rad);
    let pose_aug = Pose {
        theta: wrap_angle(pose.theta + dtheta),
        cx: pose.cx + dx,
        cy: pose.cy + dy,
    };
    Ok((ShapeCoeffs(b_aug), pose_aug))
}
