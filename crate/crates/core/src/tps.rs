//! Thin-plate splines between landmark sets and backward grid warping.
//!
//! `T(q) = a0 + a1 q.x + a2 q.y + sum_i w_i U(|q - src_i|)` with the kernel
//! `U(r) = r^2 log r`. For a fixed source configuration the solved
//! coefficients are linear in the destination points, which [`TpsBasis`]
//! exploits: it factors the system once and [`WarpPlan`] tabulates, for every
//! output pixel, the weight each destination landmark has on the mapped
//! position.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{LandmarkSet, Point};
use crate::raster::{GridRole, GridSpec, ScalarGrid};

fn kernel(r_sq: f64) -> f64 {
    if r_sq <= 0.0 {
        0.0
    } else {
        0.5 * r_sq * r_sq.ln()
    }
}

#[derive(Debug, Clone)]
pub struct TpsTransform {
    pub source: Vec<Point>,
    /// `[a0, a1, a2]` per output coordinate.
    pub affine: [[f64; 3]; 2],
    pub weights: Vec<Point>,
    pub lambda: f64,
}

impl TpsTransform {
    pub fn apply(&self, q: Point) -> Point {
        let [ax, ay] = self.affine;
        let mut out = Point::new(
            ax[0] + ax[1] * q.x + ax[2] * q.y,
            ay[0] + ay[1] * q.x + ay[2] * q.y,
        );
        for (s, w) in self.source.iter().zip(&self.weights) {
            let u = kernel((q - *s).norm_sq());
            out = out + *w * u;
        }
        out
    }

    /// Largest violation of `sum w = 0`, `sum w x = 0`, `sum w y = 0`.
    pub fn side_condition_residual(&self) -> f64 {
        let mut sums = [Point::ORIGIN; 3];
        for (s, w) in self.source.iter().zip(&self.weights) {
            sums[0] = sums[0] + *w;
            sums[1] = sums[1] + *w * s.x;
            sums[2] = sums[2] + *w * s.y;
        }
        sums.iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0, f64::max)
    }
}

/// Factored TPS system for a fixed source configuration.
#[derive(Debug, Clone)]
pub struct TpsBasis {
    source: Vec<Point>,
    lambda: f64,
    /// First `n` columns of the inverse system matrix, `(n + 3) x n`.
    solve: DMatrix<f64>,
}

impl TpsBasis {
    pub fn new(source: &[Point], lambda: f64) -> Result<Self> {
        let n = source.len();
        if n < 3 {
            return Err(Error::invalid("thin-plate spline needs at least 3 points"));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid("TPS regularization must be non-negative"));
        }
        if source.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite TPS control point"));
        }
        let scale = source
            .iter()
            .map(|p| p.norm())
            .fold(1.0_f64, f64::max);
        for i in 0..n {
            for j in (i + 1)..n {
                if source[i].distance(source[j]) <= 1e-12 * scale {
                    return Err(Error::Degenerate(format!(
                        "duplicate TPS control points {i} and {j}"
                    )));
                }
            }
        }
        let spread = (1..n)
            .map(|i| {
                (2..n)
                    .map(|j| (source[i] - source[0]).cross(source[j] - source[0]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= 1e-12 * scale * scale {
            return Err(Error::Degenerate("TPS control points are collinear".into()));
        }

        let size = n + 3;
        let mut system = DMatrix::<f64>::zeros(size, size);
        for i in 0..n {
            for j in 0..n {
                system[(i, j)] = kernel((source[i] - source[j]).norm_sq());
            }
            system[(i, i)] += lambda;
            let row = [1.0, source[i].x, source[i].y];
            for (k, v) in row.iter().enumerate() {
                system[(i, n + k)] = *v;
                system[(n + k, i)] = *v;
            }
        }
        let rhs = DMatrix::<f64>::identity(size, n);
        let solve = system
            .lu()
            .solve(&rhs)
            .filter(|m| m.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Degenerate("singular TPS system".into()))?;
        Ok(TpsBasis {
            source: source.to_vec(),
            lambda,
            solve,
        })
    }

    pub fn source(&self) -> &[Point] {
        &self.source
    }

    pub fn fit(&self, dest: &[Point]) -> Result<TpsTransform> {
        let n = self.source.len();
        if dest.len() != n {
            return Err(Error::invalid("TPS source and destination lengths differ"));
        }
        let dx = DVector::from_iterator(n, dest.iter().map(|p| p.x));
        let dy = DVector::from_iterator(n, dest.iter().map(|p| p.y));
        let cx = &self.solve * dx;
        let cy = &self.solve * dy;
        let weights = (0..n).map(|i| Point::new(cx[i], cy[i])).collect();
        Ok(TpsTransform {
            source: self.source.clone(),
            affine: [
                [cx[n], cx[n + 1], cx[n + 2]],
                [cy[n], cy[n + 1], cy[n + 2]],
            ],
            weights,
            lambda: self.lambda,
        })
    }

    /// Weights `g_j(q)` such that `T(q) = sum_j g_j(q) dest_j` for any destination.
    pub fn point_weights(&self, q: Point, out: &mut [f64]) {
        let n = self.source.len();
        let mut row = Vec::with_capacity(n + 3);
        row.extend(self.source.iter().map(|s| kernel((q - *s).norm_sq())));
        row.extend([1.0, q.x, q.y]);
        for (j, o) in out.iter_mut().enumerate().take(n) {
            *o = row.iter().enumerate().map(|(k, r)| r * self.solve[(k, j)]).sum();
        }
    }
}

/// Fits the thin-plate spline mapping every `src` point onto its `dst` point.
pub fn tps_fit(src: &[Point], dst: &[Point], lambda: f64) -> Result<TpsTransform> {
    if src.len() != dst.len() {
        return Err(Error::invalid("TPS source and destination lengths differ"));
    }
    TpsBasis::new(src, lambda)?.fit(dst)
}

/// Backward warp: output pixel `q` takes the bilinear (boundary-clamped)
/// sample of `grid` at `t(q)`.
pub fn tps_warp_grid(grid: &ScalarGrid, t: &TpsTransform, out_spec: &GridSpec) -> Result<ScalarGrid> {
    out_spec.validate()?;
    let mut values = Vec::with_capacity(out_spec.pixel_count());
    for y in 0..out_spec.height {
        for x in 0..out_spec.width {
            let src = t.apply(Point::new(x as f64, y as f64));
            values.push(grid.sample(src));
        }
    }
    ScalarGrid::new(*out_spec, GridRole::Generic, values)
}

/// `mean_i |mean_shape_i| / mean_i |p_i - c|`: rescales warped distances
/// back to the mean-shape frame.
pub fn scale_factor(mean_shape: &LandmarkSet, p: &LandmarkSet, center: Point) -> Result<f64> {
    if mean_shape.is_empty() || p.is_empty() {
        return Err(Error::invalid("empty landmark set"));
    }
    let num = mean_shape.points().iter().map(|q| q.norm()).sum::<f64>() / mean_shape.len() as f64;
    let den = p.points().iter().map(|q| q.distance(center)).sum::<f64>() / p.len() as f64;
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::Degenerate("landmarks collapse onto the LV center".into()));
    }
    Ok(num / den)
}

/// Per-pixel TPS weights over a whole output grid for a fixed source set.
#[derive(Debug, Clone)]
pub struct WarpPlan {
    spec: GridSpec,
    n: usize,
    /// Row-major `pixel x landmark`.
    weights: Vec<f64>,
}

impl WarpPlan {
    pub fn new(basis: &TpsBasis, spec: &GridSpec) -> Result<Self> {
        spec.validate()?;
        let n = basis.source().len();
        let mut weights = vec![0.0; spec.pixel_count() * n];
        for (idx, chunk) in weights.chunks_mut(n).enumerate() {
            let q = Point::new((idx % spec.width) as f64, (idx / spec.width) as f64);
            basis.point_weights(q, chunk);
        }
        Ok(WarpPlan {
            spec: *spec,
            n,
            weights,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Mapped position of every output pixel for the given destination points.
    pub fn map(&self, dest: &[Point]) -> Vec<Point> {
        debug_assert_eq!(dest.len(), self.n);
        self.weights
            .chunks(self.n)
            .map(|w| {
                w.iter()
                    .zip(dest)
                    .fold(Point::ORIGIN, |acc, (g, d)| acc + *d * *g)
            })
            .collect()
    }

    /// Pulls per-pixel sensitivities `dL/dT(q)` back onto the destination points.
    pub fn pullback(&self, pixel_grads: &[Point]) -> Vec<Point> {
        let mut out = vec![Point::ORIGIN; self.n];
        for (w, g) in self.weights.chunks(self.n).zip(pixel_grads) {
            if g.x == 0.0 && g.y == 0.0 {
                continue;
            }
            for (o, gj) in out.iter_mut().zip(w) {
                *o = *o + *g * *gj;
            }
        }
        out
    }
}
