//! Contour overlays: reference in red, contour path in cyan, map path in yellow.

use std::fmt::Write;

use myoshape_core::quant::marching_squares;
use myoshape_core::raster::{landmark_contours, BinaryMask, GridSpec, ScalarGrid};
use myoshape_core::{LandmarkSet, Point};

use crate::failure::Failure;

const SCALE: f64 = 4.0;

fn path(points: &[Point], closed: bool) -> String {
    let mut d = String::new();
    for (i, p) in points.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        let _ = write!(d, "{cmd}{:.3},{:.3} ", p.x, p.y);
    }
    if closed {
        d.push('Z');
    }
    d.trim_end().to_string()
}

fn polyline(out: &mut String, points: &[Point], color: &str, class: &str) {
    if points.len() < 2 {
        return;
    }
    let _ = writeln!(
        out,
        r#"  <path class="{class}" d="{}" fill="none" stroke="{color}" stroke-width="0.35"/>"#,
        path(points, true)
    );
}

fn landmark_paths(out: &mut String, p: &LandmarkSet, color: &str, class: &str) -> Result<(), Failure> {
    let (endo, epi) = landmark_contours(p)?;
    polyline(out, endo.points(), color, class);
    polyline(out, epi.points(), color, class);
    Ok(())
}

fn level_paths(out: &mut String, values: &[f64], w: usize, h: usize, level: f64, color: &str, class: &str) {
    for ring in marching_squares(values, w, h, level) {
        polyline(out, &ring, color, class);
    }
}

/// One case overlay with the contour-vs-map DSC in the corner.
pub fn overlay(
    spec: &GridSpec,
    truth_landmarks: Option<&LandmarkSet>,
    truth_mask: &BinaryMask,
    contour: &LandmarkSet,
    map: &ScalarGrid,
    dsc: f64,
) -> Result<String, Failure> {
    let (w, h) = (spec.width, spec.height);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="-0.5 -0.5 {w} {h}">"#,
        w as f64 * SCALE,
        h as f64 * SCALE
    );
    let _ = writeln!(out, r#"  <rect x="-0.5" y="-0.5" width="{w}" height="{h}" fill="black"/>"#);
    match truth_landmarks {
        Some(p) => landmark_paths(&mut out, p, "red", "truth")?,
        None => {
            let f: Vec<f64> = (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .map(|(x, y)| if truth_mask.get(x, y) { 1.0 } else { 0.0 })
                .collect();
            level_paths(&mut out, &f, w, h, 0.5, "red", "truth");
        }
    }
    landmark_paths(&mut out, contour, "cyan", "contour")?;
    // zero level set of the map; the mask is where D < 0
    let neg: Vec<f64> = map.values.iter().map(|v| -v).collect();
    level_paths(&mut out, &neg, w, h, 0.0, "yellow", "map");
    let _ = writeln!(
        out,
        r#"  <text x="1" y="{:.1}" font-family="monospace" font-size="{:.1}" fill="white">DSC {dsc:.2}</text>"#,
        (h as f64 * 0.06).max(3.0),
        (h as f64 * 0.05).max(2.5)
    );
    out.push_str("</svg>\n");
    Ok(out)
}
