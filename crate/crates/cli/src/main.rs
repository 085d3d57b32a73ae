mod commands;
mod failure;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use failure::{Failure, EXIT_USAGE};
use myoshape_core::raster::GridSpec;

#[derive(Parser, Debug)]
#[command(name = "myoshape", version, about = "Shape-model fitting, consistency losses and LV quantification on synthetic myocardium")]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Worker threads for per-case parallel work (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build, inspect or sample a shape model.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Generate a seeded synthetic population.
    Synth(SynthArgs),
    /// Rasterize landmarks into a signed distance map and mask.
    Rasterize(RasterizeArgs),
    /// Fit shape and pose to target landmarks or a distance map.
    Fit(FitArgs),
    /// DSC, MBE, HD and shape flags of predicted against reference masks.
    Eval(EvalArgs),
    /// LV parameters from landmarks or masks.
    Quant(QuantArgs),
    /// Per-metric mean and SD, with a paired permutation test against a baseline.
    Stats(StatsArgs),
    /// Compare analytic loss gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// SVG overlays of reference, contour and map boundaries plus summary tables.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
enum ModelCommand {
    Build(ModelBuildArgs),
    Variance(ModelVarianceArgs),
    Sample(ModelSampleArgs),
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 2.0)]
    pub pixel_size: f64,
}

impl GridArgs {
    pub fn spec(&self) -> Result<GridSpec, Failure> {
        let spec = GridSpec::new(self.width, self.height, self.pixel_size);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
pub struct ModelBuildArgs {
    /// Directory of `<id>.landmarks.csv` files with matching `<id>.pose.json`.
    #[arg(long)]
    pub shapes: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub pixel_size: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ModelVarianceArgs {
    #[arg(long, default_value = "model.json")]
    pub model: PathBuf,
    /// Number of leading modes.
    #[arg(long = "m")]
    pub modes: usize,
}

#[derive(Args, Debug)]
pub struct ModelSampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Uniform coefficient half-width, in standard deviations.
    #[arg(long, default_value_t = 2.0)]
    pub coeff_range: f64,
    /// Uniform center offset half-width, mm.
    #[arg(long, default_value_t = 0.0)]
    pub position_mm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta_range: f64,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON generator configuration; missing fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct RasterizeArgs {
    #[arg(long)]
    pub landmarks: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Distance map output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional binary mask output (PGM).
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// `.csv` landmarks or a `.sdgrid` distance map.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Loss weights JSON.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Optimizer configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pose JSON used as the starting pose (and prior) instead of the target centroid.
    #[arg(long)]
    pub init_pose: Option<PathBuf>,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantSource {
    Landmarks,
    Mask,
}

#[derive(Args, Debug)]
pub struct QuantArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = QuantSource::Landmarks)]
    pub from: QuantSource,
    #[arg(long, default_value_t = 2.0)]
    pub pixel_size: f64,
    /// Reference quantification CSV; adds MAE and correlation rows.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Per-case metric CSV with a `case_id` column.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long, default_value_t = myoshape_core::metrics::DEFAULT_PERMUTATIONS)]
    pub n_perm: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 20)]
    pub configs: usize,
    /// CSV output; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Reference cases (landmarks, masks or maps).
    #[arg(long)]
    pub truth: PathBuf,
    /// Contour-path results (landmark CSVs or fit JSONs).
    #[arg(long)]
    pub contour: PathBuf,
    /// Map-path results (distance maps).
    #[arg(long)]
    pub map: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// `--seed`, then `MYOSHAPE_SEED`, then the given default.
pub fn resolve_seed(flag: Option<u64>, default: u64) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("MYOSHAPE_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::validation(format!("MYOSHAPE_SEED is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(default),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::validation("--jobs must be positive"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Failure::validation(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Model(ModelCommand::Build(a)) => commands::model_build(&a),
        Command::Model(ModelCommand::Variance(a)) => commands::model_variance(&a),
        Command::Model(ModelCommand::Sample(a)) => commands::model_sample(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Rasterize(a) => commands::rasterize(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Quant(a) => commands::quant(&a),
        Command::Stats(a) => commands::stats(&a),
        Command::Gradcheck(a) => commands::gradcheck(&a),
        Command::Report(a) => commands::report(&a),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code as u8)
        }
    }
}
