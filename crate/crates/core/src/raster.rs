//! Signed distance maps, soft masks and binary masks on pixel grids.
//!
//! Pixel `(x, y)` has its center at integer coordinates; values are stored
//! row-major. Distance maps are negative inside the myocardium (between the
//! endo- and epicardial contours) and positive in the cavity and outside.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{spline_contour, Contour, LandmarkSet, Point, DEFAULT_CONTOUR_SAMPLES};

/// Soft-binarization steepness used throughout.
pub const DEFAULT_ALPHA: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub pixel_size_mm: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width: 128,
            height: 128,
            pixel_size_mm: 2.0,
        }
    }
}

impl GridSpec {
    pub fn new(width: usize, height: usize, pixel_size_mm: f64) -> Self {
        GridSpec {
            width,
            height,
            pixel_size_mm,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Geometric center in pixel coordinates.
    pub fn center(&self) -> Point {
        Point::new(
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("grid dimensions must be positive"));
        }
        if !(self.pixel_size_mm.is_finite() && self.pixel_size_mm > 0.0) {
            return Err(Error::invalid("pixel size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridRole {
    DistanceMap,
    SoftMask,
    Generic,
}

impl fmt::Display for GridRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridRole::DistanceMap => "distance_map",
            GridRole::SoftMask => "soft_mask",
            GridRole::Generic => "generic",
        })
    }
}

impl FromStr for GridRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distance_map" => Ok(GridRole::DistanceMap),
            "soft_mask" => Ok(GridRole::SoftMask),
            "generic" => Ok(GridRole::Generic),
            other => Err(Error::Format(format!("unknown grid role {other:?}"))),
        }
    }
}

/// Bilinear lookup: interpolated value, spatial gradient and the four
/// supporting `(index, weight)` taps.
#[derive(Debug, Clone, Copy)]
pub struct BilinearSample {
    pub value: f64,
    pub grad: [f64; 2],
    pub taps: [(usize, f64); 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub spec: GridSpec,
    pub role: GridRole,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(spec: GridSpec, role: GridRole, values: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.pixel_count() {
            return Err(Error::invalid(format!(
                "grid of {}x{} needs {} values, got {}",
                spec.width,
                spec.height,
                spec.pixel_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite grid value"));
        }
        Ok(ScalarGrid { spec, role, values })
    }

    pub fn filled(spec: GridSpec, role: GridRole, value: f64) -> Self {
        ScalarGrid {
            spec,
            role,
            values: vec![value; spec.pixel_count()],
        }
    }

    pub fn width(&self) -> usize {
        self.spec.width
    }

    pub fn height(&self) -> usize {
        self.spec.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.spec.width + x]
    }

    pub fn same_shape(&self, other: &ScalarGrid) -> bool {
        self.spec.width == other.spec.width && self.spec.height == other.spec.height
    }

    /// Bilinear interpolation with boundary clamping. Along a clamped axis the
    /// spatial derivative is zero.
    pub fn bilinear(&self, x: f64, y: f64) -> BilinearSample {
        let (w, h) = (self.spec.width, self.spec.height);
        let (x0, fx, gx_live) = axis_cell(x, w);
        let (y0, fy, gy_live) = axis_cell(y, h);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let i00 = y0 * w + x0;
        let i10 = y0 * w + x1;
        let i01 = y1 * w + x0;
        let i11 = y1 * w + x1;
        let (v00, v10, v01, v11) = (
            self.values[i00],
            self.values[i10],
            self.values[i01],
            self.values[i11],
        );
        let value = (1.0 - fx) * (1.0 - fy) * v00
            + fx * (1.0 - fy) * v10
            + (1.0 - fx) * fy * v01
            + fx * fy * v11;
        let gx = if gx_live && x1 != x0 {
            (1.0 - fy) * (v10 - v00) + fy * (v11 - v01)
        } else {
            0.0
        };
        let gy = if gy_live && y1 != y0 {
            (1.0 - fx) * (v01 - v00) + fx * (v11 - v10)
        } else {
            0.0
        };
        BilinearSample {
            value,
            grad: [gx, gy],
            taps: [
                (i00, (1.0 - fx) * (1.0 - fy)),
                (i10, fx * (1.0 - fy)),
                (i01, (1.0 - fx) * fy),
                (i11, fx * fy),
            ],
        }
    }

    pub fn sample(&self, p: Point) -> f64 {
        self.bilinear(p.x, p.y).value
    }
}

/// Cell origin, fractional offset and whether the coordinate was inside the
/// valid range (so the derivative along this axis is live).
fn axis_cell(v: f64, len: usize) -> (usize, f64, bool) {
    let max = (len - 1) as f64;
    if len == 1 {
        return (0, 0.0, false);
    }
    let inside = (0.0..=max).contains(&v);
    let c = v.clamp(0.0, max);
    let i0 = (c.floor() as usize).min(len - 2);
    (i0, c - i0 as f64, inside)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid("mask bit count does not match dimensions"));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn centroid(&self) -> Option<Point> {
        let mut sum = Point::ORIGIN;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sum = sum + Point::new(x as f64, y as f64);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum * (1.0 / n as f64))
    }
}

/// Closed spline contours `(endo, epi)` through the two landmark rings.
pub fn landmark_contours(p: &LandmarkSet) -> Result<(Contour, Contour)> {
    let samples = DEFAULT_CONTOUR_SAMPLES.max(p.n_endo());
    Ok((
        spline_contour(p.endo(), samples)?,
        spline_contour(p.epi(), samples)?,
    ))
}

/// Exact signed Euclidean distance to the nearer of the two polylines.
pub fn distance_map(endo: &Contour, epi: &Contour, spec: &GridSpec) -> Result<ScalarGrid> {
    spec.validate()?;
    if endo.points().iter().any(|&q| !epi.contains(q)) {
        return Err(Error::Topology("endocardium is not inside the epicardium".into()));
    }
    if epi.points().iter().any(|&q| endo.contains(q)) {
        return Err(Error::Topology("epicardium crosses into the cavity".into()));
    }
    let w = spec.width;
    let mut values = vec![0.0; spec.pixel_count()];
    values.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let q = Point::new(x as f64, y as f64);
            let d = endo.distance_to(q).min(epi.distance_to(q));
            let in_myo = epi.contains(q) && !endo.contains(q);
            *v = if in_myo { -d } else { d };
        }
    });
    ScalarGrid::new(*spec, GridRole::DistanceMap, values)
}

/// Distance map of the spline contours through a landmark set.
pub fn distance_map_from_landmarks(p: &LandmarkSet, spec: &GridSpec) -> Result<ScalarGrid> {
    let (endo, epi) = landmark_contours(p)?;
    distance_map(&endo, &epi, spec)
}

/// `S = exp(-alpha D) / (1 + exp(-alpha D))`, evaluated in overflow-safe form.
pub fn sigmoid_mask(d: f64, alpha: f64) -> f64 {
    let z = alpha * d;
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

pub fn soft_mask(d: &ScalarGrid, alpha: f64) -> Result<ScalarGrid> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::invalid("alpha must be positive"));
    }
    Ok(ScalarGrid {
        spec: d.spec,
        role: GridRole::SoftMask,
        values: d.values.iter().map(|&v| sigmoid_mask(v, alpha)).collect(),
    })
}

/// Zero-level thresholding: foreground where `D < 0`.
pub fn binarize(d: &ScalarGrid) -> BinaryMask {
    BinaryMask {
        width: d.spec.width,
        height: d.spec.height,
        bits: d.values.iter().map(|&v| v < 0.0).collect(),
    }
}

/// Filled epicardial spline polygon minus the filled endocardial one, tested at
/// pixel centers.
pub fn mask_from_landmarks(p: &LandmarkSet, spec: &GridSpec) -> Result<BinaryMask> {
    spec.validate()?;
    let (endo, epi) = landmark_contours(p)?;
    mask_from_contours(&endo, &epi, spec)
}

pub fn mask_from_contours(endo: &Contour, epi: &Contour, spec: &GridSpec) -> Result<BinaryMask> {
    if !endo.is_simple() {
        return Err(Error::Topology("endocardial contour self-intersects".into()));
    }
    if !epi.is_simple() {
        return Err(Error::Topology("epicardial contour self-intersects".into()));
    }
    Ok(BinaryMask::from_fn(spec.width, spec.height, |x, y| {
        let q = Point::new(x as f64, y as f64);
        epi.contains(q) && !endo.contains(q)
    }))
}
