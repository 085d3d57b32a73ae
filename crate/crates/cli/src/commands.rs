use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use myoshape_core::fit::{fit_to_distance_map, fit_to_landmarks, FitConfig, FitResult, InitPolicy, TraceEntry};
use myoshape_core::gradcheck::run_suite;
use myoshape_core::io::{pose_to_json, write_grid, write_landmarks_csv, write_pgm};
use myoshape_core::losses::{predicted_landmarks, LossWeights};
use myoshape_core::metrics::{bootstrap_rank_test, dsc, evaluate};
use myoshape_core::quant::{lv_params_from_landmarks, lv_params_from_mask, mae_and_correlation};
use myoshape_core::raster::{binarize, distance_map_from_landmarks, GridSpec};
use myoshape_core::shape_model::{augment, build_model, AugmentRanges, ShapeModel};
use myoshape_core::synth::{generate_population, SynthConfig};
use myoshape_core::{pose_normalize, LVParams, LandmarkSet, Point, Pose, ShapeCoeffs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::failure::Failure;
use crate::output::*;
use crate::svg;
use crate::{
    resolve_seed, EvalArgs, FitArgs, GradcheckArgs, ModelBuildArgs, ModelSampleArgs,
    ModelVarianceArgs, QuantArgs, QuantSource, RasterizeArgs, ReportArgs, StatsArgs, SynthArgs,
};

fn load_model(path: &Path) -> Result<ShapeModel, Failure> {
    Ok(ShapeModel::from_json(&read_text(path)?)?)
}

fn write_landmarks(path: &Path, p: &LandmarkSet) -> Result<(), Failure> {
    write_atomic(path, |w| write_landmarks_csv(p, w))
}

pub fn model_build(a: &ModelBuildArgs) -> Result<(), Failure> {
    let run = Run::start("model build", &[&a.shapes], json!({ "pixel_size_mm": a.pixel_size }), None);
    let ids = case_ids(&a.shapes, &[LANDMARKS])?;
    let shapes = ids
        .par_iter()
        .map(|id| {
            let p = load_landmarks(&case_path(&a.shapes, id, LANDMARKS))?;
            let pose_path = case_path(&a.shapes, id, POSE);
            if !pose_path.exists() {
                return Err(Failure::validation(format!("missing {}", pose_path.display())));
            }
            Ok(pose_normalize(&p, &load_pose(&pose_path)?)?)
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let model = build_model(&shapes, a.pixel_size)?;
    write_text(&a.out, &model.to_json()?)?;
    run.finish(&parent_dir(&a.out))
}

pub fn model_variance(a: &ModelVarianceArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    println!("{}", model.explained_variance(a.modes)?);
    Ok(())
}

pub fn model_sample(a: &ModelSampleArgs) -> Result<(), Failure> {
    let seed = resolve_seed(a.seed, 0)?;
    let model = load_model(&a.model)?;
    let spec = a.grid.spec()?;
    let ranges = AugmentRanges {
        coeff: a.coeff_range,
        position_mm: a.position_mm,
        theta_rad: a.theta_range,
    };
    let config = json!({ "n": a.n, "ranges": ranges, "grid": spec });
    let run = Run::start("model sample", &[&a.model], config, Some(seed));
    let base = Pose::new(0.0, spec.center());
    let zeros = vec![0.0; model.modes()];
    (0..a.n).into_par_iter().try_for_each(|i| -> Result<(), Failure> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let (b, pose) = augment(&model, &zeros, &base, &mut rng, &ranges)?;
        let p = predicted_landmarks(&model, &b, &pose)?;
        let id = format!("sample_{i:04}");
        write_landmarks(&case_path(&a.out_dir, &id, LANDMARKS), &p)?;
        write_text(&case_path(&a.out_dir, &id, POSE), &pose_to_json(&pose)?)?;
        write_text(&case_path(&a.out_dir, &id, COEFFS), &serde_json::to_string(&b)?)?;
        Ok(())
    })?;
    run.finish(&a.out_dir)
}

pub fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    cfg.seed = resolve_seed(a.seed, cfg.seed)?;
    let inputs: Vec<&Path> = a.config.iter().map(|p| p.as_path()).collect();
    let run = Run::start("synth", &inputs, serde_json::to_value(&cfg)?, Some(cfg.seed));
    let cases = generate_population(&cfg)?;
    let spec = cfg.grid;
    cases.par_iter().enumerate().try_for_each(|(i, c)| -> Result<(), Failure> {
        let id = format!("case_{i:04}");
        let d = distance_map_from_landmarks(&c.landmarks, &spec)?;
        write_landmarks(&case_path(&a.out_dir, &id, LANDMARKS), &c.landmarks)?;
        write_text(&case_path(&a.out_dir, &id, POSE), &pose_to_json(&c.pose)?)?;
        write_atomic(&case_path(&a.out_dir, &id, DISTANCE), |w| write_grid(&d, w))?;
        write_atomic(&case_path(&a.out_dir, &id, MASK), |w| write_pgm(&binarize(&d), w))?;
        Ok(())
    })?;
    run.finish(&a.out_dir)
}

pub fn rasterize(a: &RasterizeArgs) -> Result<(), Failure> {
    let spec = a.grid.spec()?;
    let run = Run::start("rasterize", &[&a.landmarks], json!({ "grid": spec }), None);
    if a.mask.as_ref().is_some_and(|m| parent_dir(m) != parent_dir(&a.out)) {
        return Err(Failure::validation("--mask and --out must share a directory"));
    }
    let p = load_landmarks(&a.landmarks)?;
    let d = distance_map_from_landmarks(&p, &spec)?;
    write_atomic(&a.out, |w| write_grid(&d, w))?;
    if let Some(m) = &a.mask {
        write_atomic(m, |w| write_pgm(&binarize(&d), w))?;
    }
    run.finish(&parent_dir(&a.out))
}

/// Fit result as written by `fit`: the optimizer output plus the fitted
/// landmarks.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub b: ShapeCoeffs,
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    pub landmarks: Vec<[f64; 2]>,
    pub n_endo: usize,
    pub trace: Vec<TraceEntry>,
}

impl FitOutput {
    fn new(r: FitResult, p: &LandmarkSet) -> Self {
        FitOutput {
            b: r.b,
            pose: r.pose,
            converged: r.converged,
            iterations: r.iterations,
            landmarks: p.points().iter().map(|q| [q.x, q.y]).collect(),
            n_endo: p.n_endo(),
            trace: r.trace,
        }
    }

    pub fn landmark_set(&self) -> Result<LandmarkSet, Failure> {
        let pts = self.landmarks.iter().map(|q| Point::new(q[0], q[1])).collect();
        Ok(LandmarkSet::from_points(pts, self.n_endo)?)
    }
}

pub fn fit(a: &FitArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let mut cfg: FitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    if let Some(w) = &a.weights {
        cfg.weights = read_json::<LossWeights>(w)?;
    }
    if a.modes.is_some() {
        cfg.modes = a.modes;
    }
    if let Some(p) = &a.init_pose {
        cfg.init = InitPolicy::Provided {
            b: Vec::new(),
            pose: load_pose(p)?,
        };
    }
    let mut inputs: Vec<&Path> = vec![&a.target, &a.model];
    inputs.extend(a.weights.as_deref());
    inputs.extend(a.config.as_deref());
    let run = Run::start("fit", &inputs, serde_json::to_value(&cfg)?, None);
    let is_csv = a.target.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let result = if is_csv {
        fit_to_landmarks(&load_landmarks(&a.target)?, &model, &cfg)?
    } else {
        fit_to_distance_map(&load_grid(&a.target)?, &model, None, &cfg)?
    };
    let p = predicted_landmarks(&model, &result.b, &result.pose)?;
    let out = FitOutput::new(result, &p);
    write_text(&a.out, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    run.finish(&parent_dir(&a.out))
}

const MASK_SOURCES: [&str; 4] = [MASK, DISTANCE, LANDMARKS, FIT];

pub fn eval(a: &EvalArgs) -> Result<(), Failure> {
    let spec = a.grid.spec()?;
    let run = Run::start("eval", &[&a.pred, &a.truth], json!({ "grid": spec }), None);
    let ids = case_ids(&a.pred, &MASK_SOURCES)?;
    let rows = ids
        .par_iter()
        .map(|id| {
            let truth = case_mask(&a.truth, id, &spec)?;
            let pred = case_mask(&a.pred, id, &spec)?;
            let r = evaluate(&pred, &truth)?;
            Ok(vec![
                id.clone(),
                r.dsc.to_string(),
                fmt_opt(r.mbe_px),
                fmt_opt(r.hd_px),
                r.flags.to_string(),
            ])
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    write_text(&a.out, &csv_text(&["case_id", "dsc", "mbe_px", "hd_px", "flags"], &rows)?)?;
    run.finish(&parent_dir(&a.out))
}

fn quant_header() -> Vec<String> {
    let mut h = vec!["case_id".to_string()];
    h.extend(LVParams::column_names());
    h
}

/// Per-case numeric columns of a CSV keyed by `case_id`.
fn read_table(path: &Path) -> Result<(Vec<String>, BTreeMap<String, Vec<Option<f64>>>), Failure> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("case_id") {
        return Err(Failure::validation(format!("{}: first column must be case_id", path.display())));
    }
    let mut rows = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let vals = rec.iter().skip(1).map(|v| v.parse::<f64>().ok()).collect();
        rows.insert(id, vals);
    }
    Ok((header[1..].to_vec(), rows))
}

pub fn quant(a: &QuantArgs) -> Result<(), Failure> {
    let config = json!({ "from": format!("{:?}", a.from), "pixel_size_mm": a.pixel_size });
    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.truth.as_deref());
    let run = Run::start("quant", &inputs, config, None);
    let ids = match a.from {
        QuantSource::Landmarks => case_ids(&a.input, &[LANDMARKS, FIT])?,
        QuantSource::Mask => case_ids(&a.input, &[MASK, DISTANCE])?,
    };
    let spec = GridSpec::default();
    let params = ids
        .par_iter()
        .map(|id| -> Result<LVParams, Failure> {
            match a.from {
                QuantSource::Landmarks => {
                    let p = case_landmarks(&a.input, id)?
                        .ok_or_else(|| Failure::validation(format!("no landmarks for {id}")))?;
                    Ok(lv_params_from_landmarks(&p, a.pixel_size)?)
                }
                QuantSource::Mask => {
                    let m = case_mask(&a.input, id, &spec)?;
                    let pose = load_pose(&case_path(&a.input, id, POSE))?;
                    Ok(lv_params_from_mask(&m, pose.theta, a.pixel_size)?)
                }
            }
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let mut rows: Vec<Vec<String>> = ids
        .iter()
        .zip(&params)
        .map(|(id, q)| {
            let mut r = vec![id.clone()];
            r.extend(q.to_vec().iter().map(f64::to_string));
            r
        })
        .collect();
    if let Some(truth_path) = &a.truth {
        let (cols, truth) = read_table(truth_path)?;
        if cols != LVParams::column_names() {
            return Err(Failure::validation("truth file columns differ from the quantification columns"));
        }
        let mut mae_row = vec!["MAE".to_string()];
        let mut rho_row = vec!["rho".to_string()];
        for k in 0..cols.len() {
            let mut t = Vec::new();
            let mut p = Vec::new();
            for (id, q) in ids.iter().zip(&params) {
                let tv = truth
                    .get(id)
                    .and_then(|r| r.get(k).copied().flatten())
                    .ok_or_else(|| Failure::validation(format!("truth file has no value for {id}")))?;
                t.push(tv);
                p.push(q.to_vec()[k]);
            }
            match mae_and_correlation(&t, &p) {
                Ok((mae, rho)) => {
                    mae_row.push(mae.to_string());
                    rho_row.push(rho.to_string());
                }
                Err(myoshape_core::Error::UndefinedCorrelation) => {
                    let mae = t.iter().zip(&p).map(|(x, y)| (x - y).abs()).sum::<f64>() / t.len() as f64;
                    mae_row.push(mae.to_string());
                    rho_row.push(String::new());
                }
                Err(e) => return Err(e.into()),
            }
        }
        rows.push(mae_row);
        rows.push(rho_row);
    }
    let header = quant_header();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_text(&a.out, &csv_text(&header, &rows)?)?;
    run.finish(&parent_dir(&a.out))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, sd)
}

pub fn stats(a: &StatsArgs) -> Result<(), Failure> {
    let seed = resolve_seed(a.seed, 0)?;
    let mut inputs: Vec<&Path> = vec![&a.input];
    inputs.extend(a.baseline.as_deref());
    let run = Run::start("stats", &inputs, json!({ "n_perm": a.n_perm }), Some(seed));
    let (cols, table) = read_table(&a.input)?;
    let baseline = a.baseline.as_deref().map(read_table).transpose()?;
    let mut rows = Vec::new();
    for (k, name) in cols.iter().enumerate() {
        let values: Vec<f64> = table.values().filter_map(|r| r.get(k).copied().flatten()).collect();
        if values.is_empty() {
            continue;
        }
        let (mean, sd) = mean_sd(&values);
        let p = match &baseline {
            Some((bcols, btable)) => {
                let j = bcols
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Failure::validation(format!("baseline has no column {name}")))?;
                let (x, y): (Vec<f64>, Vec<f64>) = table
                    .iter()
                    .filter_map(|(id, r)| {
                        let x = r.get(k).copied().flatten()?;
                        let y = btable.get(id)?.get(j).copied().flatten()?;
                        Some((x, y))
                    })
                    .unzip();
                Some(bootstrap_rank_test(&x, &y, a.n_perm, seed)?)
            }
            None => None,
        };
        rows.push(vec![name.clone(), mean.to_string(), sd.to_string(), fmt_opt(p)]);
    }
    write_text(&a.out, &csv_text(&["metric", "mean", "std", "p_value_vs_baseline"], &rows)?)?;
    run.finish(&parent_dir(&a.out))
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), Failure> {
    let seed = resolve_seed(a.seed, 7)?;
    let run = Run::start("gradcheck", &[], json!({ "configs": a.configs }), Some(seed));
    let results = run_suite(seed, a.configs)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| vec![r.term.clone(), r.param_block.clone(), r.max_rel_err.to_string()])
        .collect();
    let text = csv_text(&["term", "param_block", "max_rel_err"], &rows)?;
    match &a.out {
        Some(p) => {
            write_text(p, &text)?;
            run.finish(&parent_dir(p))?;
        }
        None => print!("{text}"),
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{}/{}", r.term, r.param_block))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::numerical(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn report(a: &ReportArgs) -> Result<(), Failure> {
    let spec = a.grid.spec()?;
    let run = Run::start("report", &[&a.truth, &a.contour, &a.map], json!({ "grid": spec }), None);
    let ids = case_ids(&a.contour, &[LANDMARKS, FIT])?;
    fs::create_dir_all(&a.out_dir)?;
    let rows = ids
        .par_iter()
        .map(|id| -> Result<[f64; 3], Failure> {
            let truth_mask = case_mask(&a.truth, id, &spec)?;
            let contour = case_landmarks(&a.contour, id)?
                .ok_or_else(|| Failure::validation(format!("no contour-path result for {id}")))?;
            let map_path = case_path(&a.map, id, DISTANCE);
            if !map_path.exists() {
                return Err(Failure::validation(format!("missing {}", map_path.display())));
            }
            let map = load_grid(&map_path)?;
            if map.spec.width != spec.width || map.spec.height != spec.height {
                return Err(Failure::validation(format!("{}: grid size differs from --width/--height", map_path.display())));
            }
            let contour_mask = myoshape_core::raster::mask_from_landmarks(&contour, &spec)?;
            let map_mask = binarize(&map);
            let d_cm = dsc(&contour_mask, &map_mask)?;
            let d_ct = dsc(&contour_mask, &truth_mask)?;
            let d_mt = dsc(&map_mask, &truth_mask)?;
            let truth_lm = case_landmarks(&a.truth, id)?;
            let doc = svg::overlay(&spec, truth_lm.as_ref(), &truth_mask, &contour, &map, d_cm)?;
            write_text(&a.out_dir.join(format!("{id}.svg")), &doc)?;
            Ok([d_cm, d_ct, d_mt])
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let names = ["dsc_contour_map", "dsc_contour_truth", "dsc_map_truth"];
    let per_case: Vec<Vec<String>> = ids
        .iter()
        .zip(&rows)
        .map(|(id, r)| {
            let mut v = vec![id.clone()];
            v.extend(r.iter().map(f64::to_string));
            v
        })
        .collect();
    let mut header = vec!["case_id"];
    header.extend(names);
    write_text(&a.out_dir.join("report.csv"), &csv_text(&header, &per_case)?)?;
    let summary: Vec<Vec<String>> = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let (mean, sd) = mean_sd(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
            vec![n.to_string(), mean.to_string(), sd.to_string()]
        })
        .collect();
    write_text(&a.out_dir.join("summary.csv"), &csv_text(&["metric", "mean", "sd"], &summary)?)?;
    run.finish(&a.out_dir)
}
