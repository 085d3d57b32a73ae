//! Output plumbing: atomic writes, case discovery and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use myoshape_core::io::{read_grid, read_landmarks_csv, read_pgm};
use myoshape_core::raster::{binarize, mask_from_landmarks, BinaryMask, GridSpec, ScalarGrid};
use myoshape_core::{LandmarkSet, Pose};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::failure::Failure;

pub const LANDMARKS: &str = ".landmarks.csv";
pub const POSE: &str = ".pose.json";
pub const DISTANCE: &str = ".distance.sdgrid";
pub const MASK: &str = ".mask.pgm";
pub const FIT: &str = ".fit.json";
pub const COEFFS: &str = ".b.json";
pub const MANIFEST: &str = "manifest.json";

/// Writes through a temporary file in the destination directory and renames
/// it into place.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> myoshape_core::Result<()>) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir)?;
    write(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).map_err(|e| Failure::from(e.error))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

pub fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<fs::File, Failure> {
    fs::File::open(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet, Failure> {
    Ok(read_landmarks_csv(open(path)?)?)
}

pub fn load_grid(path: &Path) -> Result<ScalarGrid, Failure> {
    Ok(read_grid(std::io::BufReader::new(open(path)?))?)
}

pub fn load_pose(path: &Path) -> Result<Pose, Failure> {
    Ok(myoshape_core::io::pose_from_json(&read_text(path)?)?)
}

/// Case ids of every file in `dir` ending in one of `suffixes`, sorted.
pub fn case_ids(dir: &Path, suffixes: &[&str]) -> Result<Vec<String>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::validation(format!("{}: {e}", dir.display())))?;
    let mut ids = Vec::new();
    for entry in entries {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(id) = suffixes.iter().find_map(|s| name.strip_suffix(s)) {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        return Err(Failure::validation(format!(
            "{} contains no {} files",
            dir.display(),
            suffixes.join(" / ")
        )));
    }
    Ok(ids)
}

pub fn case_path(dir: &Path, id: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{id}{suffix}"))
}

/// Landmarks of a case from either a landmark CSV or a fit result.
pub fn case_landmarks(dir: &Path, id: &str) -> Result<Option<LandmarkSet>, Failure> {
    let csv = case_path(dir, id, LANDMARKS);
    if csv.exists() {
        return load_landmarks(&csv).map(Some);
    }
    let fit = case_path(dir, id, FIT);
    if fit.exists() {
        let out: crate::commands::FitOutput = read_json(&fit)?;
        return out.landmark_set().map(Some);
    }
    Ok(None)
}

/// Mask of a case from the first available representation: mask, distance
/// map, landmarks or fit result.
pub fn case_mask(dir: &Path, id: &str, spec: &GridSpec) -> Result<BinaryMask, Failure> {
    let pgm = case_path(dir, id, MASK);
    if pgm.exists() {
        return Ok(read_pgm(std::io::BufReader::new(open(&pgm)?))?);
    }
    let grid = case_path(dir, id, DISTANCE);
    if grid.exists() {
        return Ok(binarize(&load_grid(&grid)?));
    }
    match case_landmarks(dir, id)? {
        Some(p) => Ok(mask_from_landmarks(&p, spec)?),
        None => Err(Failure::validation(format!("no input for case {id} in {}", dir.display()))),
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
}

pub fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// SHA-256 of the compact JSON form; object keys are sorted by the map type,
/// so the hash does not depend on field order.
pub fn config_hash(config: &Value) -> String {
    let normalized = serde_json::to_string(config).expect("JSON values always serialize");
    hex::encode(Sha256::digest(normalized.as_bytes()))
}

pub struct Run {
    command: String,
    inputs: Vec<String>,
    config: Value,
    seed: Option<u64>,
    started: f64,
}

impl Run {
    pub fn start(command: &str, inputs: &[&Path], config: Value, seed: Option<u64>) -> Self {
        Run {
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            config,
            seed,
            started: now_unix(),
        }
    }

    /// Writes `manifest.json` into `dir`, replacing any earlier one.
    pub fn finish(self, dir: &Path) -> Result<(), Failure> {
        let manifest = RunManifest {
            command: self.command,
            inputs: self.inputs,
            config_hash: config_hash(&self.config),
            seed: self.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_s: self.started,
            finished_unix_s: now_unix(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        write_text(&dir.join(MANIFEST), &(text + "\n"))
    }
}

/// Directory that holds a single output file.
pub fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Plain CSV text with `\n` line endings.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
