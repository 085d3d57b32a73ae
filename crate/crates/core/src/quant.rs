//! LV cavity area, myocardial area, cavity dimensions and regional wall
//! thickness, from landmarks or from a segmentation mask.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{resample_equiangular, Contour, LandmarkSet, Point, DEFAULT_RING_SIZE};
use crate::metrics::{classify_shape, enclosed_background};
use crate::raster::{landmark_contours, BinaryMask};

pub const SEGMENTS: usize = 6;
pub const DIMENSIONS: usize = 3;
/// Gaussian smoothing applied to region indicators before contour extraction.
pub const MASK_SMOOTHING_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LVParams {
    /// Cavity area, mm^2.
    pub a_lv: f64,
    /// Myocardial area, mm^2.
    pub a_myo: f64,
    pub dim_lv: [f64; DIMENSIONS],
    pub rwt: [f64; SEGMENTS],
}

impl LVParams {
    /// `a_lv, a_myo, dim_1..dim_3, rwt_1..rwt_6`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.a_lv, self.a_myo];
        v.extend(self.dim_lv);
        v.extend(self.rwt);
        v
    }

    pub fn column_names() -> Vec<String> {
        let mut v = vec!["a_lv_mm2".to_string(), "a_myo_mm2".to_string()];
        v.extend((1..=DIMENSIONS).map(|j| format!("dim{j}_mm")));
        v.extend((1..=SEGMENTS).map(|k| format!("rwt{k}_mm")));
        v
    }
}

/// Landmark path. Segment `k` averages the wall thickness at ring indices
/// `k n/6 .. (k+1) n/6`; dimension group `j` averages the cavity diameters
/// between indices `i` and `i + n/2` for `i` in `j n/6 .. (j+1) n/6`.
/// Areas come from the spline polygons through each ring.
pub fn lv_params_from_landmarks(p: &LandmarkSet, pixel_size_mm: f64) -> Result<LVParams> {
    if !(pixel_size_mm > 0.0 && pixel_size_mm.is_finite()) {
        return Err(Error::invalid("pixel size must be positive"));
    }
    let n = p.n_endo();
    if p.epi().len() != n {
        return Err(Error::invalid("endo and epi rings differ in size"));
    }
    if n == 0 || n % SEGMENTS != 0 {
        return Err(Error::invalid(format!(
            "ring size {n} is not a positive multiple of {SEGMENTS}"
        )));
    }
    if p.points().iter().any(|q| !q.is_finite()) {
        return Err(Error::invalid("non-finite landmark"));
    }
    let (endo, epi) = landmark_contours(p)?;
    if !endo.is_simple() || !epi.is_simple() {
        return Err(Error::Topology("self-intersecting ring polygon".into()));
    }
    let px2 = pixel_size_mm * pixel_size_mm;
    let a_endo = endo.area();
    let a_epi = epi.area();

    let per = n / SEGMENTS;
    let mut rwt = [0.0; SEGMENTS];
    for (k, r) in rwt.iter_mut().enumerate() {
        *r = (k * per..(k + 1) * per)
            .map(|i| p.epi()[i].distance(p.endo()[i]))
            .sum::<f64>()
            / per as f64
            * pixel_size_mm;
    }
    let mut dim_lv = [0.0; DIMENSIONS];
    for (j, d) in dim_lv.iter_mut().enumerate() {
        *d = (j * per..(j + 1) * per)
            .map(|i| p.endo()[i].distance(p.endo()[i + n / 2]))
            .sum::<f64>()
            / per as f64
            * pixel_size_mm;
    }
    Ok(LVParams {
        a_lv: a_endo * px2,
        a_myo: (a_epi - a_endo) * px2,
        dim_lv,
        rwt,
    })
}

/// Mask path: extracts the cavity and epicardial boundaries, resamples both
/// at equiangular rays from the cavity centroid starting at `theta`, then
/// applies the landmark-path arithmetic.
pub fn lv_params_from_mask(m: &BinaryMask, theta: f64, pixel_size_mm: f64) -> Result<LVParams> {
    let p = landmarks_from_mask(m, theta, DEFAULT_RING_SIZE)?;
    lv_params_from_landmarks(&p, pixel_size_mm)
}

/// Equiangular endo/epi landmarks recovered from a myocardium mask.
pub fn landmarks_from_mask(m: &BinaryMask, theta: f64, ring_size: usize) -> Result<LandmarkSet> {
    if !theta.is_finite() {
        return Err(Error::invalid("non-finite orientation"));
    }
    let flags = classify_shape(m);
    if !flags.is_clean() {
        return Err(Error::UnrealisticShape(flags));
    }
    let cavity_pixels = enclosed_background(m)
        .into_iter()
        .max_by_key(|c| c.len())
        .expect("clean masks have a cavity");
    let mut cavity = BinaryMask::empty(m.width, m.height);
    for &i in &cavity_pixels {
        cavity.bits[i] = true;
    }
    let mut filled = m.clone();
    for &i in &cavity_pixels {
        filled.bits[i] = true;
    }
    let center = cavity.centroid().expect("cavity is non-empty");
    let endo = region_boundary(&cavity, MASK_SMOOTHING_SIGMA)?;
    let epi = region_boundary(&filled, MASK_SMOOTHING_SIGMA)?;
    let endo_pts = resample_equiangular(&endo, center, theta, ring_size)?;
    let epi_pts = resample_equiangular(&epi, center, theta, ring_size)?;
    LandmarkSet::new(endo_pts, epi_pts)
}

/// Longest closed iso-0.5 contour of the Gaussian-smoothed region indicator.
pub fn region_boundary(m: &BinaryMask, sigma: f64) -> Result<Contour> {
    let pad = if sigma > 0.0 { (3.0 * sigma).ceil() as usize + 1 } else { 1 };
    let (w, h) = (m.width + 2 * pad, m.height + 2 * pad);
    let mut f = vec![0.0; w * h];
    for y in 0..m.height {
        for x in 0..m.width {
            if m.get(x, y) {
                f[(y + pad) * w + x + pad] = 1.0;
            }
        }
    }
    if sigma > 0.0 {
        f = gaussian_blur(&f, w, h, sigma);
    }
    let loops = marching_squares(&f, w, h, 0.5);
    let best = loops
        .into_iter()
        .max_by_key(|l| l.len())
        .ok_or_else(|| Error::Topology("region has no boundary".into()))?;
    let shift = Point::new(pad as f64, pad as f64);
    Contour::closed(best.into_iter().map(|q| q - shift).collect())
}

fn gaussian_blur(f: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (o, kv) in (-r..=r).zip(&k) {
                    let (xx, yy) = if horizontal {
                        (x as isize + o, y as isize)
                    } else {
                        (x as isize, y as isize + o)
                    };
                    if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                        acc += kv * src[yy as usize * w + xx as usize];
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    let tmp = pass(f, true);
    pass(&tmp, false)
}

/// Closed iso-contours of `f` (row-major `w x h`) at `level`. Values equal
/// to the level count as above it; saddles are resolved by the cell mean.
pub fn marching_squares(f: &[f64], w: usize, h: usize, level: f64) -> Vec<Vec<Point>> {
    // edge ids: horizontal edge from (x, y) to (x+1, y) is 2 (y w + x),
    // vertical edge from (x, y) to (x, y+1) is 2 (y w + x) + 1
    let above = |x: usize, y: usize| f[y * w + x] >= level;
    let crossing = |id: usize| -> Point {
        let base = id / 2;
        let (x, y) = (base % w, base / w);
        let (x2, y2) = if id % 2 == 0 { (x + 1, y) } else { (x, y + 1) };
        let (a, b) = (f[y * w + x], f[y2 * w + x2]);
        let t = ((level - a) / (b - a)).clamp(0.0, 1.0);
        Point::new(x as f64 + t * (x2 as f64 - x as f64), y as f64 + t * (y2 as f64 - y as f64))
    };
    let mut links: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut link = |a: usize, b: usize| {
        links.entry(a).or_default().push(b);
        links.entry(b).or_default().push(a);
    };
    for y in 0..h.saturating_sub(1) {
        for x in 0..w.saturating_sub(1) {
            let top = 2 * (y * w + x);
            let bottom = 2 * ((y + 1) * w + x);
            let left = 2 * (y * w + x) + 1;
            let right = 2 * (y * w + x + 1) + 1;
            let code = (above(x, y) as u8)
                | (above(x + 1, y) as u8) << 1
                | (above(x + 1, y + 1) as u8) << 2
                | (above(x, y + 1) as u8) << 3;
            match code {
                0 | 15 => {}
                1 | 14 => link(left, top),
                2 | 13 => link(top, right),
                3 | 12 => link(left, right),
                4 | 11 => link(right, bottom),
                6 | 9 => link(top, bottom),
                7 | 8 => link(left, bottom),
                5 | 10 => {
                    let mean = (f[y * w + x] + f[y * w + x + 1] + f[(y + 1) * w + x] + f[(y + 1) * w + x + 1]) / 4.0;
                    // corners 0 and 2 above (code 5) joined through the center when the mean is above
                    let joined = (mean >= level) == (code == 5);
                    if joined {
                        link(left, bottom);
                        link(top, right);
                    } else {
                        link(left, top);
                        link(right, bottom);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    let mut keys: Vec<usize> = links.keys().copied().collect();
    keys.sort_unstable();
    let mut visited = std::collections::HashSet::new();
    let mut loops = Vec::new();
    for start in keys {
        if visited.contains(&start) {
            continue;
        }
        let mut path = vec![start];
        visited.insert(start);
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = links[&cur].iter().copied().find(|&n| n != prev && !visited.contains(&n));
            match next {
                Some(n) => {
                    visited.insert(n);
                    path.push(n);
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        let closes = path.len() >= 3 && links[&cur].contains(&start);
        if !closes {
            continue;
        }
        let mut pts: Vec<Point> = Vec::with_capacity(path.len());
        for id in path {
            let q = crossing(id);
            if pts.last().is_none_or(|l: &Point| l.distance(q) > 1e-12) {
                pts.push(q);
            }
        }
        while pts.len() > 1 && pts[0].distance(*pts.last().expect("non-empty")) <= 1e-12 {
            pts.pop();
        }
        if pts.len() >= 3 {
            loops.push(pts);
        }
    }
    loops
}

/// Mean absolute error and Pearson correlation.
pub fn mae_and_correlation(truth: &[f64], pred: &[f64]) -> Result<(f64, f64)> {
    if truth.len() != pred.len() {
        return Err(Error::invalid("value lists differ in length"));
    }
    if truth.len() < 2 {
        return Err(Error::invalid("need at least 2 values"));
    }
    if truth.iter().chain(pred).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value"));
    }
    let n = truth.len() as f64;
    let mae = truth.iter().zip(pred).map(|(t, p)| (t - p).abs()).sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, p) in truth.iter().zip(pred) {
        sxy += (t - mt) * (p - mp);
        sxx += (t - mt) * (t - mt);
        syy += (p - mp) * (p - mp);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((mae, sxy / (sxx * syy).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::radial_ring;
    use crate::raster::{mask_from_landmarks, GridSpec};
    use std::f64::consts::PI;

    fn annulus(center: Point, r0: f64, r1: f64) -> LandmarkSet {
        LandmarkSet::new(
            radial_ring(center, 0.0, 18, |_| r0),
            radial_ring(center, 0.0, 18, |_| r1),
        )
        .unwrap()
    }

    #[test]
    fn analytic_annulus() {
        let q = lv_params_from_landmarks(&annulus(Point::ORIGIN, 10.0, 15.0), 2.0).unwrap();
        assert!((q.a_lv - 400.0 * PI).abs() / (400.0 * PI) < 0.01);
        assert!((q.a_myo - 500.0 * PI).abs() / (500.0 * PI) < 0.01);
        assert!(q.dim_lv.iter().all(|d| (d - 40.0).abs() < 0.1));
        assert!(q.rwt.iter().all(|r| (r - 10.0).abs() < 0.01));
    }

    #[test]
    fn scaling_homogeneity() {
        let p = annulus(Point::new(3.0, 1.0), 9.0, 13.0);
        let a = lv_params_from_landmarks(&p, 1.0).unwrap();
        let b = lv_params_from_landmarks(&p.map(|q| q * 2.0).unwrap(), 1.0).unwrap();
        assert!((b.a_lv - 4.0 * a.a_lv).abs() < 1e-9 * b.a_lv);
        assert!((b.a_myo - 4.0 * a.a_myo).abs() < 1e-9 * b.a_myo);
        for k in 0..6 {
            assert!((b.rwt[k] - 2.0 * a.rwt[k]).abs() < 1e-9);
        }
        for j in 0..3 {
            assert!((b.dim_lv[j] - 2.0 * a.dim_lv[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_path_on_rasterized_annulus() {
        let spec = GridSpec::default();
        let p = annulus(spec.center(), 10.0, 15.0);
        let m = mask_from_landmarks(&p, &spec).unwrap();
        let a = lv_params_from_landmarks(&p, 2.0).unwrap();
        let b = lv_params_from_mask(&m, 0.0, 2.0).unwrap();
        for (x, y) in a.rwt.iter().zip(&b.rwt) {
            assert!((x - y).abs() <= 2.0, "{x} vs {y}");
        }
        for (x, y) in a.dim_lv.iter().zip(&b.dim_lv) {
            assert!((x - y).abs() <= 2.0, "{x} vs {y}");
        }
        assert!((a.a_lv - b.a_lv).abs() / a.a_lv < 0.03);
        assert!((a.a_myo - b.a_myo).abs() / a.a_myo < 0.03);
    }

    #[test]
    fn flagged_mask_is_rejected() {
        let m = BinaryMask::from_fn(32, 32, |x, y| (x as f64 - 16.0).hypot(y as f64 - 16.0) < 8.0);
        assert!(matches!(
            lv_params_from_mask(&m, 0.0, 1.0),
            Err(Error::UnrealisticShape(f)) if f.no_cavity
        ));
    }

    #[test]
    fn marching_squares_square() {
        let m = BinaryMask::from_fn(8, 8, |x, y| (2..5).contains(&x) && (2..5).contains(&y));
        let c = region_boundary(&m, 0.0).unwrap();
        // boundary halfway between pixel centres: a 3 x 3 square with clipped corners
        assert!((c.area() - 8.5).abs() < 1e-9, "{}", c.area());
    }

    #[test]
    fn correlation_examples() {
        let t = [1.0, 2.0, 4.0, 7.0];
        assert_eq!(mae_and_correlation(&t, &t).unwrap(), (0.0, 1.0));
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((mae_and_correlation(&t, &neg).unwrap().1 + 1.0).abs() < 1e-12);
        assert!(matches!(
            mae_and_correlation(&t, &[1.0; 4]),
            Err(Error::UndefinedCorrelation)
        ));
    }
}
