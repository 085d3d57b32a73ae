//! Shape-constrained myocardium segmentation building blocks: a PCA shape
//! model over endo/epi landmark rings, signed distance maps and soft masks,
//! thin-plate spline warping, the training losses with analytic gradients,
//! a direct fitter, evaluation metrics and LV quantification.

pub mod error;
pub mod fit;
pub mod geometry;
pub mod gradcheck;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod quant;
pub mod raster;
pub mod shape_model;
pub mod synth;
pub mod tps;

pub use error::{Error, Result};
pub use fit::{fit_to_distance_map, fit_to_landmarks, FitConfig, FitResult, InitPolicy, TraceEntry};
pub use geometry::{
    orientation_from_rv, pose_denormalize, pose_normalize, resample_equiangular, wrap_angle, Contour,
    LandmarkSet, Point, Pose,
};
pub use losses::{LossTerm, LossWeights, OverlapFrame};
pub use metrics::{MetricReport, ShapeFlags};
pub use quant::LVParams;
pub use raster::{BinaryMask, GridRole, GridSpec, ScalarGrid};
pub use shape_model::{build_model, ShapeCoeffs, ShapeModel};
pub use synth::{generate_population, SynthCase, SynthConfig};
pub use tps::{TpsTransform, WarpPlan};
