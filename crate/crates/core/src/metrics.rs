//! Segmentation and parameter-error metrics, topology checks and the paired
//! rank permutation test.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_denormalize, wrap_angle, Contour, LandmarkSet, Pose};
use crate::raster::BinaryMask;
use crate::shape_model::ShapeModel;

/// Default number of label permutations for [`bootstrap_rank_test`].
pub const DEFAULT_PERMUTATIONS: usize = 100_000;

/// Topology defects of a myocardium mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeFlags {
    pub empty: bool,
    pub no_cavity: bool,
    pub open_myocardium: bool,
    pub multi_component: bool,
}

impl ShapeFlags {
    pub fn is_clean(&self) -> bool {
        *self == ShapeFlags::default()
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.empty {
            out.push("empty");
        }
        if self.no_cavity {
            out.push("no_cavity");
        }
        if self.open_myocardium {
            out.push("open_myocardium");
        }
        if self.multi_component {
            out.push("multi_component");
        }
        out
    }
}

impl fmt::Display for ShapeFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.names().join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dsc: f64,
    /// `None` when either mask is empty.
    pub mbe_px: Option<f64>,
    pub hd_px: Option<f64>,
    /// Flags of the predicted mask.
    pub flags: ShapeFlags,
}

/// DSC, boundary distances and topology flags of `pred` against `truth`.
pub fn evaluate(pred: &BinaryMask, truth: &BinaryMask) -> Result<MetricReport> {
    let dsc = dsc(pred, truth)?;
    let (mbe_px, hd_px) = match boundary_distances(pred, truth) {
        Ok((m, h)) => (Some(m), Some(h)),
        Err(Error::UndefinedMetric(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        dsc,
        mbe_px,
        hd_px,
        flags: classify_shape(pred),
    })
}

/// `2 |a & b| / (|a| + |b|)`; two empty masks score 1.
pub fn dsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::invalid("mask dimensions differ"));
    }
    let inter = a.bits.iter().zip(&b.bits).filter(|(x, y)| **x && **y).count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Foreground pixels with a 4-neighbor in the background. Pixels outside
/// the image count as background.
pub fn boundary_pixels(m: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = (m.width, m.height);
    let bg = |x: isize, y: isize| {
        x < 0 || y < 0 || x >= w as isize || y >= h as isize || !m.get(x as usize, y as usize)
    };
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as isize, y as isize);
            if bg(xi - 1, yi) || bg(xi + 1, yi) || bg(xi, yi - 1) || bg(xi, yi + 1) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Exact squared Euclidean distance transform to a set of seed pixels
/// (lower envelope of parabolas, one pass per axis).
pub fn squared_distance_transform(width: usize, height: usize, seeds: &[(usize, usize)]) -> Vec<f64> {
    let mut f = vec![f64::INFINITY; width * height];
    for &(x, y) in seeds {
        f[y * width + x] = 0.0;
    }
    let mut line = Vec::new();
    let mut out = Vec::new();
    for x in 0..width {
        line.clear();
        line.extend((0..height).map(|y| f[y * width + x]));
        envelope_1d(&line, &mut out);
        for y in 0..height {
            f[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        line.clear();
        line.extend_from_slice(&f[y * width..(y + 1) * width]);
        envelope_1d(&line, &mut out);
        f[y * width..(y + 1) * width].copy_from_slice(&out);
    }
    f
}

fn envelope_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        return;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let intersect = |q: usize, p: usize| {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    for &q in &sites {
        loop {
            match v.last() {
                Some(&p) if intersect(q, p) <= *z.last().expect("z tracks v") => {
                    v.pop();
                    z.pop();
                }
                _ => break,
            }
        }
        let s = match v.last() {
            Some(&p) => intersect(q, p),
            None => f64::NEG_INFINITY,
        };
        v.push(q);
        z.push(s);
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < v.len() && z[k + 1] < p as f64 {
            k += 1;
        }
        let d = p as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Symmetric mean boundary error (average of the two directed means) and
/// Hausdorff distance between the boundary pixel sets, in pixels.
pub fn boundary_distances(a: &BinaryMask, b: &BinaryMask) -> Result<(f64, f64)> {
    if !a.same_shape(b) {
        return Err(Error::invalid("mask dimensions differ"));
    }
    let ba = boundary_pixels(a);
    let bb = boundary_pixels(b);
    if ba.is_empty() || bb.is_empty() {
        return Err(Error::UndefinedMetric("boundary distance of an empty mask".into()));
    }
    let (w, h) = (a.width, a.height);
    let dt_a = squared_distance_transform(w, h, &ba);
    let dt_b = squared_distance_transform(w, h, &bb);
    let directed = |from: &[(usize, usize)], dt: &[f64]| {
        let mut sum = 0.0;
        let mut max = 0.0_f64;
        for &(x, y) in from {
            let d = dt[y * w + x].sqrt();
            sum += d;
            max = max.max(d);
        }
        (sum / from.len() as f64, max)
    };
    let (mean_ab, max_ab) = directed(&ba, &dt_b);
    let (mean_ba, max_ba) = directed(&bb, &dt_a);
    Ok((0.5 * (mean_ab + mean_ba), max_ab.max(max_ba)))
}

/// Hausdorff distance between the vertex sets of two contours. Provided as
/// an alternative to the mask-boundary variant.
pub fn contour_hausdorff(a: &Contour, b: &Contour) -> f64 {
    let directed = |from: &Contour, to: &Contour| {
        from.points()
            .iter()
            .map(|&q| to.distance_to(q))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Connected component labels (0 = not part of `target`, components from 1)
/// and the component count.
pub fn label_components(m: &BinaryMask, target: bool, conn: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = (m.width, m.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    let offsets: &[(isize, isize)] = match conn {
        Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
        Connectivity::Eight => &[
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ],
    };
    for start in 0..w * h {
        if m.bits[start] != target || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for (dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if m.bits[j] == target && labels[j] == 0 {
                    labels[j] = next;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, next)
}

/// Background components (4-connected) that do not touch the image border.
pub fn enclosed_background(m: &BinaryMask) -> Vec<Vec<usize>> {
    let (w, h) = (m.width, m.height);
    let (labels, count) = label_components(m, false, Connectivity::Four);
    let mut touches = vec![false; count as usize + 1];
    let mut members = vec![Vec::new(); count as usize + 1];
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
            touches[l as usize] = true;
        }
        members[l as usize].push(i);
    }
    (1..=count as usize)
        .filter(|&l| !touches[l])
        .map(|l| std::mem::take(&mut members[l]))
        .collect()
}

/// Flags unrealistic myocardium masks. Foreground uses 8-connectivity and
/// background 4-connectivity. Without an enclosed cavity, the mask is
/// `open_myocardium` when the pixel at the foreground centroid is
/// background (the would-be cavity leaks to the border) and `no_cavity`
/// otherwise.
pub fn classify_shape(m: &BinaryMask) -> ShapeFlags {
    let mut flags = ShapeFlags::default();
    if m.count() == 0 {
        flags.empty = true;
        return flags;
    }
    let (_, fg_count) = label_components(m, true, Connectivity::Eight);
    flags.multi_component = fg_count > 1;
    if enclosed_background(m).is_empty() {
        let c = m.centroid().expect("mask is non-empty");
        let (x, y) = (c.x.round() as usize, c.y.round() as usize);
        if m.get(x.min(m.width - 1), y.min(m.height - 1)) {
            flags.no_cavity = true;
        } else {
            flags.open_myocardium = true;
        }
    }
    flags
}

/// Center error in pixels and wrapped orientation error in degrees.
pub fn pose_errors(truth: &Pose, pred: &Pose) -> (f64, f64) {
    let dc = truth.center().distance(pred.center());
    let dtheta = wrap_angle(truth.theta - pred.theta).abs().to_degrees();
    (dc, dtheta)
}

/// Mean landmark distance between `p_t` and the shape reconstructed from
/// `b_p` under the ground-truth pose.
pub fn shape_landmark_error(
    model: &ShapeModel,
    b_p: &[f64],
    truth_pose: &Pose,
    p_t: &LandmarkSet,
) -> Result<f64> {
    let p = pose_denormalize(&model.reconstruct(b_p)?, truth_pose)?;
    if p.len() != p_t.len() {
        return Err(Error::invalid("landmark counts differ"));
    }
    Ok(p.points()
        .iter()
        .zip(p_t.points())
        .map(|(a, b)| a.distance(*b))
        .sum::<f64>()
        / p.len() as f64)
}

/// [`shape_landmark_error`] using only the first `k` coefficients, for
/// `k = 1..=len(b_p)`.
pub fn shape_landmark_error_curve(
    model: &ShapeModel,
    b_p: &[f64],
    truth_pose: &Pose,
    p_t: &LandmarkSet,
) -> Result<Vec<f64>> {
    (1..=b_p.len())
        .map(|k| shape_landmark_error(model, &b_p[..k], truth_pose, p_t))
        .collect()
}

/// Paired rank permutation test between two methods evaluated on the same
/// cases. Each case ranks the two methods by metric value (ties share 1.5);
/// the statistic is the difference of mean ranks. Permutations swap the
/// method labels within each case. Returns the fraction of permutations
/// whose absolute statistic reaches the observed one.
pub fn bootstrap_rank_test(a: &[f64], b: &[f64], n_perm: usize, seed: u64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid("per-case metric lists differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::invalid("need at least 2 cases"));
    }
    if n_perm < 1000 {
        return Err(Error::invalid("use at least 1000 permutations"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite metric value"));
    }
    // rank(a) - rank(b) per case in units of one rank: -1, 0 or +1
    let diffs: Vec<i64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| match x.total_cmp(y) {
            std::cmp::Ordering::Less => -1,
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Greater => 1,
        })
        .collect();
    let observed: i64 = diffs.iter().sum::<i64>().abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n_perm {
        let s: i64 = diffs
            .iter()
            .map(|&d| if rng.random::<bool>() { d } else { -d })
            .sum();
        if s.abs() >= observed {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_perm as f64)
}
