//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use myoshape_core::raster::BinaryMask;
use rand::Rng;

/// Central differences, written out independently of the library helper.
pub fn fd(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[k] += h;
        down[k] -= h;
        out.push((f(&up) - f(&down)) / (2.0 * h));
    }
    out
}

pub fn rel_err(a: &[f64], n: &[f64]) -> f64 {
    let mut num = 0.0_f64;
    let mut scale = 1e-8_f64;
    for (x, y) in a.iter().zip(n) {
        num = num.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    num / scale
}

pub fn random_mask<R: Rng>(rng: &mut R, w: usize, h: usize, density: f64) -> BinaryMask {
    let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
    BinaryMask::new(w, h, bits).unwrap()
}

fn fg(m: &BinaryMask, x: i64, y: i64) -> bool {
    x >= 0 && y >= 0 && (x as usize) < m.width && (y as usize) < m.height && m.get(x as usize, y as usize)
}

/// Boundary pixels in row-major order, by direct neighbor inspection.
pub fn brute_boundary(m: &BinaryMask) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for y in 0..m.height as i64 {
        for x in 0..m.width as i64 {
            if fg(m, x, y) && (!fg(m, x - 1, y) || !fg(m, x + 1, y) || !fg(m, x, y - 1) || !fg(m, x, y + 1)) {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn brute_dsc(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let mut inter = 0usize;
    let mut na = 0usize;
    let mut nb = 0usize;
    for y in 0..a.height {
        for x in 0..a.width {
            let (p, q) = (a.get(x, y), b.get(x, y));
            na += p as usize;
            nb += q as usize;
            inter += (p && q) as usize;
        }
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * inter as f64 / (na + nb) as f64
    }
}

/// All-pairs symmetric mean boundary error and Hausdorff distance.
pub fn brute_boundary_distances(a: &BinaryMask, b: &BinaryMask) -> (f64, f64) {
    let ba = brute_boundary(a);
    let bb = brute_boundary(b);
    let directed = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        let mut sum = 0.0;
        let mut max = 0.0_f64;
        for &(x, y) in from {
            let best = to
                .iter()
                .map(|&(u, v)| ((x - u) * (x - u) + (y - v) * (y - v)) as f64)
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            sum += best;
            max = max.max(best);
        }
        (sum / from.len() as f64, max)
    };
    let (m1, h1) = directed(&ba, &bb);
    let (m2, h2) = directed(&bb, &ba);
    (0.5 * (m1 + m2), h1.max(h2))
}

/// Flood fill from `start` over pixels equal to `value`; returns the visited set.
pub fn flood(m: &BinaryMask, start: (usize, usize), value: bool, eight: bool, seen: &mut [bool]) {
    let mut stack = vec![start];
    while let Some((x, y)) = stack.pop() {
        let i = y * m.width + x;
        if seen[i] || m.get(x, y) != value {
            continue;
        }
        seen[i] = true;
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && (nx as usize) < m.width && (ny as usize) < m.height {
                    stack.push((nx as usize, ny as usize));
                }
            }
        }
    }
}

/// Number of 8-connected foreground components and whether any 4-connected
/// background region is unreachable from the image border.
pub fn flood_topology(m: &BinaryMask) -> (usize, bool) {
    let mut seen = vec![false; m.width * m.height];
    let mut components = 0;
    for y in 0..m.height {
        for x in 0..m.width {
            if m.get(x, y) && !seen[y * m.width + x] {
                components += 1;
                flood(m, (x, y), true, true, &mut seen);
            }
        }
    }
    let mut outside = vec![false; m.width * m.height];
    for y in 0..m.height {
        for x in 0..m.width {
            if (x == 0 || y == 0 || x == m.width - 1 || y == m.height - 1) && !m.get(x, y) {
                flood(m, (x, y), false, false, &mut outside);
            }
        }
    }
    let enclosed = (0..m.width * m.height).any(|i| !m.bits[i] && !outside[i]);
    (components, enclosed)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}
