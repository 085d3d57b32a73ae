//! Seeded synthetic myocardium populations with known pose and shape.
//!
//! Each ring follows `r(phi) = r0 + sum_k a_k cos(k phi + psi_k)` for
//! harmonic orders 1 to 6. Phases are fixed per ring and amplitudes are drawn
//! uniformly from `[-A_k, A_k]`, so the noiseless family spans exactly twelve
//! shape dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_denormalize, pose_normalize, LandmarkSet, Point, Pose, DEFAULT_RING_SIZE};
use crate::raster::{binarize, distance_map_from_landmarks, BinaryMask, GridSpec, ScalarGrid};
use crate::shape_model::{ShapeCoeffs, ShapeModel};

pub const HARMONICS: usize = 6;
const MAX_RETRIES: usize = 100;
/// Radial samples used for the endo-inside-epi margin check.
const MARGIN_SAMPLES: usize = 720;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_cases: usize,
    pub ring_size: usize,
    pub r_endo_mm: f64,
    pub r_epi_mm: f64,
    pub endo_amplitudes_mm: [f64; HARMONICS],
    pub epi_amplitudes_mm: [f64; HARMONICS],
    pub endo_phases: [f64; HARMONICS],
    pub epi_phases: [f64; HARMONICS],
    /// Isotropic Gaussian landmark jitter, mm.
    pub noise_sd_mm: f64,
    /// Minimum radial wall thickness, mm.
    pub min_margin_mm: f64,
    /// Orientation drawn uniformly from `[-theta_range, theta_range]`.
    pub theta_range_rad: f64,
    /// Center offset from the grid center, uniform per axis, mm.
    pub center_range_mm: f64,
    pub grid: GridSpec,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_cases: 200,
            ring_size: DEFAULT_RING_SIZE,
            r_endo_mm: 20.0,
            r_epi_mm: 30.0,
            endo_amplitudes_mm: [0.6, 1.6, 0.9, 0.5, 0.3, 0.2],
            epi_amplitudes_mm: [0.5, 1.2, 0.6, 0.4, 0.25, 0.15],
            endo_phases: [0.0, 0.7, 1.9, 2.6, 0.4, 1.3],
            epi_phases: [1.6, 2.9, 0.2, 1.1, 2.3, 0.8],
            noise_sd_mm: 0.05,
            min_margin_mm: 2.0,
            theta_range_rad: std::f64::consts::FRAC_PI_2,
            center_range_mm: 20.0,
            grid: GridSpec::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.n_cases == 0 {
            return Err(Error::invalid("n_cases must be positive"));
        }
        if self.ring_size < 4 {
            return Err(Error::invalid("ring_size must be at least 4"));
        }
        if !(self.r_endo_mm > 0.0 && self.r_epi_mm > self.r_endo_mm && self.r_epi_mm.is_finite()) {
            return Err(Error::invalid("need 0 < r_endo < r_epi"));
        }
        let all = self
            .endo_amplitudes_mm
            .iter()
            .chain(&self.epi_amplitudes_mm)
            .chain([&self.noise_sd_mm, &self.min_margin_mm, &self.theta_range_rad, &self.center_range_mm]);
        if all.clone().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("amplitudes, noise, margin and ranges must be non-negative"));
        }
        if self.endo_phases.iter().chain(&self.epi_phases).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite harmonic phase"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    /// Image-frame landmarks, pixels.
    pub landmarks: LandmarkSet,
    pub pose: Pose,
}

impl SynthCase {
    pub fn normalized(&self) -> Result<LandmarkSet> {
        pose_normalize(&self.landmarks, &self.pose)
    }
}

fn radius(r0: f64, amps: &[f64], phases: &[f64; HARMONICS], phi: f64) -> f64 {
    r0 + amps
        .iter()
        .zip(phases)
        .enumerate()
        .map(|(k, (a, psi))| a * ((k + 1) as f64 * phi + psi).cos())
        .sum::<f64>()
}

fn draw_case(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<SynthCase> {
    let px = cfg.grid.pixel_size_mm;
    let n = cfg.ring_size;
    let noise = Normal::new(0.0, cfg.noise_sd_mm / px).map_err(|e| Error::invalid(e.to_string()))?;
    for _ in 0..MAX_RETRIES {
        let mut draw = |bounds: &[f64; HARMONICS]| -> [f64; HARMONICS] {
            let mut out = [0.0; HARMONICS];
            for (o, b) in out.iter_mut().zip(bounds) {
                *o = if *b > 0.0 { rng.random_range(-*b..=*b) } else { 0.0 };
            }
            out
        };
        let endo_a = draw(&cfg.endo_amplitudes_mm);
        let epi_a = draw(&cfg.epi_amplitudes_mm);
        let r_endo = |phi: f64| radius(cfg.r_endo_mm, &endo_a, &cfg.endo_phases, phi) / px;
        let r_epi = |phi: f64| radius(cfg.r_epi_mm, &epi_a, &cfg.epi_phases, phi) / px;

        let margin_px = cfg.min_margin_mm / px;
        let smooth_ok = (0..MARGIN_SAMPLES).all(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / MARGIN_SAMPLES as f64;
            r_endo(phi) > 0.0 && r_epi(phi) - r_endo(phi) >= margin_px
        });

        let mut ring = |r: &dyn Fn(f64) -> f64| -> Vec<Point> {
            (0..n)
                .map(|i| {
                    let phi = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                    let jitter = if cfg.noise_sd_mm > 0.0 {
                        Point::new(noise.sample(rng), noise.sample(rng))
                    } else {
                        Point::ORIGIN
                    };
                    Point::from_polar(r(phi), phi) + jitter
                })
                .collect()
        };
        let endo = ring(&r_endo);
        let epi = ring(&r_epi);
        let theta = if cfg.theta_range_rad > 0.0 {
            rng.random_range(-cfg.theta_range_rad..=cfg.theta_range_rad)
        } else {
            0.0
        };
        let mut offset = || {
            if cfg.center_range_mm > 0.0 {
                rng.random_range(-cfg.center_range_mm..=cfg.center_range_mm) / px
            } else {
                0.0
            }
        };
        let center = cfg.grid.center() + Point::new(offset(), offset());
        if !smooth_ok {
            continue;
        }
        let jitter_ok = endo
            .iter()
            .zip(&epi)
            .all(|(a, b)| a.norm() > 0.0 && b.norm() - a.norm() >= margin_px);
        if !jitter_ok {
            continue;
        }
        let pose = Pose::new(theta, center);
        let landmarks = pose_denormalize(&LandmarkSet::new(endo, epi)?, &pose)?;
        return Ok(SynthCase { landmarks, pose });
    }
    Err(Error::InfeasibleConfig(format!(
        "no admissible case in {MAX_RETRIES} draws; reduce the harmonic amplitudes or the margin"
    )))
}

/// Seeded population; case `i` uses its own generator stream, so cases are
/// generated in parallel and remain independent of thread scheduling.
pub fn generate_population(cfg: &SynthConfig) -> Result<Vec<SynthCase>> {
    cfg.validate()?;
    (0..cfg.n_cases)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            draw_case(cfg, &mut rng)
        })
        .collect()
}

/// Pose-normalized training shapes of a population.
pub fn normalized_shapes(cases: &[SynthCase]) -> Result<Vec<LandmarkSet>> {
    cases.iter().map(SynthCase::normalized).collect()
}

/// Every representation of one case, derived from the same landmarks.
#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub landmarks: LandmarkSet,
    pub pose: Pose,
    pub b: ShapeCoeffs,
    pub distance: ScalarGrid,
    pub mask: BinaryMask,
}

pub fn make_case_bundle(case: &SynthCase, model: &ShapeModel, spec: &GridSpec) -> Result<CaseBundle> {
    let b = model.project(&case.normalized()?, model.modes())?;
    let distance = distance_map_from_landmarks(&case.landmarks, spec)?;
    let mask = binarize(&distance);
    Ok(CaseBundle {
        landmarks: case.landmarks.clone(),
        pose: case.pose,
        b,
        distance,
        mask,
    })
}
