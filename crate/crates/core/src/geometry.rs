//! Landmark sets, pose transforms and closed contours.
//!
//! All coordinates are in pixel units with pixel centers at integer positions.
//! Angles follow `atan2(y, x)` and are wrapped into `(-pi, pi]`.
//!
//! A [`LandmarkSet`] stores the endocardial ring first and the epicardial ring
//! second. Both rings have the same length and are sampled counterclockwise
//! (increasing angle) at uniform angular offsets, landmark 0 sitting at the
//! reference orientation. Index `i` of the endo ring is angularly matched to
//! index `i` of the epi ring.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of landmarks per ring.
pub const DEFAULT_RING_SIZE: usize = 18;
/// Default number of points a spline contour is resampled to.
pub const DEFAULT_CONTOUR_SAMPLES: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        Point::new(radius * angle.cos(), radius * angle.sin())
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Ordered endo + epi landmark coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
    n_endo: usize,
}

impl LandmarkSet {
    pub fn new(endo: Vec<Point>, epi: Vec<Point>) -> Result<Self> {
        if endo.len() != epi.len() {
            return Err(Error::invalid(format!(
                "ring sizes differ: {} endo vs {} epi",
                endo.len(),
                epi.len()
            )));
        }
        if endo.is_empty() {
            return Err(Error::invalid("empty landmark rings"));
        }
        let n_endo = endo.len();
        let mut points = endo;
        points.extend(epi);
        Self::from_points(points, n_endo)
    }

    pub fn from_points(points: Vec<Point>, n_endo: usize) -> Result<Self> {
        if n_endo == 0 || points.len() != 2 * n_endo {
            return Err(Error::invalid(format!(
                "expected {} points for ring size {}, got {}",
                2 * n_endo,
                n_endo,
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite landmark coordinate"));
        }
        Ok(LandmarkSet { points, n_endo })
    }

    /// Builds a set from the stacked layout `[x_0..x_{N-1}, y_0..y_{N-1}]`.
    pub fn from_vector(v: &[f64], n_endo: usize) -> Result<Self> {
        if v.len() != 4 * n_endo {
            return Err(Error::invalid(format!(
                "shape vector has length {}, expected {}",
                v.len(),
                4 * n_endo
            )));
        }
        let n = 2 * n_endo;
        let points = (0..n).map(|i| Point::new(v[i], v[n + i])).collect();
        Self::from_points(points, n_endo)
    }

    /// Stacked layout `[x_0..x_{N-1}, y_0..y_{N-1}]`, the PCA vector layout.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.points.iter().map(|p| p.x).collect();
        v.extend(self.points.iter().map(|p| p.y));
        v
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn endo(&self) -> &[Point] {
        &self.points[..self.n_endo]
    }

    pub fn epi(&self) -> &[Point] {
        &self.points[self.n_endo..]
    }

    pub fn n_endo(&self) -> usize {
        self.n_endo
    }

    /// Total landmark count N.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self> {
        Self::from_points(self.points.iter().map(|&p| f(p)).collect(), self.n_endo)
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len() as f64;
        self.points.iter().fold(Point::ORIGIN, |acc, &p| acc + p) * (1.0 / n)
    }
}

/// LV orientation and center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(rename = "theta_rad")]
    pub theta: f64,
    #[serde(rename = "cx_px")]
    pub cx: f64,
    #[serde(rename = "cy_px")]
    pub cy: f64,
}

impl Pose {
    pub fn new(theta: f64, center: Point) -> Self {
        Pose {
            theta: wrap_angle(theta),
            cx: center.x,
            cy: center.y,
        }
    }

    pub fn identity() -> Self {
        Pose::new(0.0, Point::ORIGIN)
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta.is_finite() && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("non-finite pose"));
        }
        Ok(())
    }

    /// Rotation `R(theta)` of the normalization transform applied to `v`.
    pub fn rotate_to_normalized(&self, v: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(c * v.x + s * v.y, -s * v.x + c * v.y)
    }

    /// `R(theta)^T v`.
    pub fn rotate_to_image(&self, v: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }
}

/// `s = R(theta) (p - c)` with `R = [[cos, sin], [-sin, cos]]`.
pub fn pose_normalize(p: &LandmarkSet, pose: &Pose) -> Result<LandmarkSet> {
    pose.validate()?;
    let c = pose.center();
    p.map(|q| pose.rotate_to_normalized(q - c))
}

/// Inverse of [`pose_normalize`]: `p = R(theta)^T s + c`.
pub fn pose_denormalize(s: &LandmarkSet, pose: &Pose) -> Result<LandmarkSet> {
    pose.validate()?;
    let c = pose.center();
    s.map(|q| pose.rotate_to_image(q) + c)
}

/// Orientation of the bisector of the angle formed at the LV center by the two
/// RV attachment points. The bisector on the side of the smaller enclosed
/// angle is returned.
pub fn orientation_from_rv(lv_center: Point, rv_a: Point, rv_b: Point) -> Result<f64> {
    if !(lv_center.is_finite() && rv_a.is_finite() && rv_b.is_finite()) {
        return Err(Error::invalid("non-finite attachment geometry"));
    }
    let da = rv_a - lv_center;
    let db = rv_b - lv_center;
    let (na, nb) = (da.norm(), db.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("RV attachment point coincides with LV center"));
    }
    let bisector = da * (1.0 / na) + db * (1.0 / nb);
    if bisector.norm() < 1e-12 {
        return Err(Error::Ambiguous(
            "RV attachment rays are anti-parallel; bisector side is undefined".into(),
        ));
    }
    Ok(wrap_angle(bisector.angle()))
}

/// Closed polyline. The closing segment from the last point back to the first
/// is implicit; the first point is not repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point>,
    closed: bool,
}

impl Contour {
    pub fn new(points: Vec<Point>, closed: bool) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::invalid("contour needs at least 3 points"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite contour point"));
        }
        let n = points.len();
        let seg_count = if closed { n } else { n - 1 };
        for i in 0..seg_count {
            if points[i] == points[(i + 1) % n] {
                return Err(Error::invalid(format!("duplicate consecutive point at {i}")));
            }
        }
        Ok(Contour { points, closed })
    }

    pub fn closed(points: Vec<Point>) -> Result<Self> {
        Self::new(points, true)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n - 1 };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    /// Signed shoelace area; positive for counterclockwise orientation.
    pub fn signed_area(&self) -> f64 {
        self.segments().map(|(a, b)| a.cross(b)).sum::<f64>() * 0.5
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.segments().map(|(a, b)| a.distance(b)).sum()
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, q: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a.y > q.y) != (b.y > q.y) {
                let x = a.x + (q.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if q.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Euclidean distance from `q` to the nearest point of the polyline.
    pub fn distance_to(&self, q: Point) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance_sq(q, a, b))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// True when no two non-adjacent segments intersect.
    pub fn is_simple(&self) -> bool {
        let segs: Vec<(Point, Point)> = self.segments().collect();
        let n = segs.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (self.closed && i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(segs[i].0, segs[i].1, segs[j].0, segs[j].1) {
                    return false;
                }
            }
        }
        true
    }
}

pub(crate) fn point_segment_distance_sq(q: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > 0.0 {
        ((q - a).dot(ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * t - q).norm_sq()
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = (p2 - p1).cross(q1 - p1);
    let d2 = (p2 - p1).cross(q2 - p1);
    let d3 = (q2 - q1).cross(p1 - q1);
    let d4 = (q2 - q1).cross(p2 - q1);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_segment = |a: Point, b: Point, c: Point| {
        c.x >= a.x.min(b.x) && c.x <= a.x.max(b.x) && c.y >= a.y.min(b.y) && c.y <= a.y.max(b.y)
    };
    (d1 == 0.0 && on_segment(p1, p2, q1))
        || (d2 == 0.0 && on_segment(p1, p2, q2))
        || (d3 == 0.0 && on_segment(q1, q2, p1))
        || (d4 == 0.0 && on_segment(q1, q2, p2))
}

/// Periodic cubic spline through a closed ring of points, parameterized by
/// cumulative chord length.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    knots: Vec<Point>,
    /// Chord length of segment `j` (from knot `j` to knot `j + 1`).
    h: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<Point>,
}

impl PeriodicSpline {
    pub fn fit(ring: &[Point]) -> Result<Self> {
        let n = ring.len();
        if n < 4 {
            return Err(Error::invalid(format!(
                "periodic spline needs at least 4 points, got {n}"
            )));
        }
        if ring.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite spline knot"));
        }
        let h: Vec<f64> = (0..n).map(|j| ring[j].distance(ring[(j + 1) % n])).collect();
        if h.iter().any(|&hj| hj <= 0.0) {
            return Err(Error::invalid("consecutive duplicate landmarks"));
        }
        // cyclic system: h_{j-1} M_{j-1} + 2(h_{j-1} + h_j) M_j + h_j M_{j+1} = rhs_j
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rx = DVector::<f64>::zeros(n);
        let mut ry = DVector::<f64>::zeros(n);
        for j in 0..n {
            let prev = (j + n - 1) % n;
            let next = (j + 1) % n;
            a[(j, prev)] += h[prev];
            a[(j, j)] += 2.0 * (h[prev] + h[j]);
            a[(j, next)] += h[j];
            let fwd = (ring[next] - ring[j]) * (1.0 / h[j]);
            let bwd = (ring[j] - ring[prev]) * (1.0 / h[prev]);
            rx[j] = 6.0 * (fwd.x - bwd.x);
            ry[j] = 6.0 * (fwd.y - bwd.y);
        }
        let lu = a.lu();
        let mx = lu
            .solve(&rx)
            .ok_or_else(|| Error::Degenerate("singular spline system".into()))?;
        let my = lu
            .solve(&ry)
            .ok_or_else(|| Error::Degenerate("singular spline system".into()))?;
        let m = (0..n).map(|j| Point::new(mx[j], my[j])).collect();
        Ok(PeriodicSpline {
            knots: ring.to_vec(),
            h,
            m,
        })
    }

    pub fn segment_count(&self) -> usize {
        self.knots.len()
    }

    /// Position on segment `j` at local fraction `t` in `[0, 1]`.
    pub fn eval(&self, j: usize, t: f64) -> Point {
        let n = self.knots.len();
        let k = (j + 1) % n;
        let h = self.h[j];
        let s = t * h;
        let u = h - s;
        let (mj, mk) = (self.m[j], self.m[k]);
        let (pj, pk) = (self.knots[j], self.knots[k]);
        mj * (u * u * u / (6.0 * h))
            + mk * (s * s * s / (6.0 * h))
            + (pj * (1.0 / h) - mj * (h / 6.0)) * u
            + (pk * (1.0 / h) - mk * (h / 6.0)) * s
    }

    /// First and second derivatives with respect to arc parameter on segment `j`.
    pub fn derivatives(&self, j: usize, t: f64) -> (Point, Point) {
        let n = self.knots.len();
        let k = (j + 1) % n;
        let h = self.h[j];
        let s = t * h;
        let u = h - s;
        let (mj, mk) = (self.m[j], self.m[k]);
        let (pj, pk) = (self.knots[j], self.knots[k]);
        let d1 = mj * (-u * u / (2.0 * h)) + mk * (s * s / (2.0 * h))
            - (pj * (1.0 / h) - mj * (h / 6.0))
            + (pk * (1.0 / h) - mk * (h / 6.0));
        let d2 = mj * (u / h) + mk * (s / h);
        (d1, d2)
    }

    /// Resamples the closed curve to `n_samples` points. Every knot is part of
    /// the output; segments get `n_samples / knots` samples each with the
    /// remainder spread over the first segments.
    pub fn sample(&self, n_samples: usize) -> Result<Contour> {
        let segs = self.knots.len();
        if n_samples < segs {
            return Err(Error::invalid(format!(
                "cannot resample {segs} knots to {n_samples} points"
            )));
        }
        let base = n_samples / segs;
        let extra = n_samples % segs;
        let mut out = Vec::with_capacity(n_samples);
        for j in 0..segs {
            let count = base + usize::from(j < extra);
            out.push(self.knots[j]);
            for k in 1..count {
                out.push(self.eval(j, k as f64 / count as f64));
            }
        }
        Contour::closed(out)
    }
}

/// Closed cubic spline through one ring of landmarks, resampled to `n_samples` points.
pub fn spline_contour(ring: &[Point], n_samples: usize) -> Result<Contour> {
    PeriodicSpline::fit(ring)?.sample(n_samples)
}

/// Samples `n` points on a star-shaped closed contour along rays from
/// `center` at angles `theta + 2 pi i / n`.
pub fn resample_equiangular(
    contour: &Contour,
    center: Point,
    theta: f64,
    n: usize,
) -> Result<Vec<Point>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    if !contour.is_closed() {
        return Err(Error::invalid("equiangular resampling needs a closed contour"));
    }
    (0..n)
        .map(|i| {
            let angle = theta + 2.0 * PI * i as f64 / n as f64;
            ray_crossing(contour, center, angle)
        })
        .collect()
}

/// The unique crossing of the ray from `center` at `angle` with the contour.
pub fn ray_crossing(contour: &Contour, center: Point, angle: f64) -> Result<Point> {
    let dir = Point::new(angle.cos(), angle.sin());
    // (t along the ray, hit point); a ray through a vertex can report the
    // same crossing from both adjacent segments after rounding
    let mut hits: Vec<(f64, Point)> = Vec::new();
    for (a, b) in contour.segments() {
        let e = b - a;
        let denom = dir.cross(e);
        if denom.abs() < 1e-300 {
            continue;
        }
        let w = a - center;
        // center + t dir = a + s e
        let t = w.cross(e) / denom;
        let s = w.cross(dir) / denom;
        if t > 0.0 && (-1e-12..1.0 + 1e-12).contains(&s) {
            let tol = 1e-9 * t.max(1.0);
            if !hits.iter().any(|(u, _)| (u - t).abs() <= tol) {
                hits.push((t, a + e * s.clamp(0.0, 1.0)));
            }
        }
    }
    match hits.as_slice() {
        [(_, p)] => Ok(*p),
        _ => Err(Error::NonStarShaped {
            angle_rad: wrap_angle(angle),
            crossings: hits.len(),
        }),
    }
}

/// Ring landmarks at angles `theta + 2 pi i / n` on the given radial function.
pub fn radial_ring(center: Point, theta: f64, n: usize, radius: impl Fn(f64) -> f64) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / n as f64;
            center + Point::from_polar(radius(phi), theta + phi)
        })
        .collect()
}
