//! End-to-end resampling: voxelize, estimate the radius, optionally classify
//! edges, refine the count, trim to exactly `n`, smooth.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cloud::{compute_bbox, voxel_length, voxelize, BoundingBox, PointCloud, DEFAULT_VOXEL_FACTOR};
use crate::error::{Error, Result};
use crate::feature::{self, ClassSource, Classification};
use crate::metrics::{self, ConsistencyReport, UniformityReport, DEFAULT_METRIC_K};
use crate::poisson::{
    self, estimate_area_bbox, OverCountStep, RadiusEstimate, RefineOptions, DEFAULT_LAMBDA,
    DEFAULT_MAX_REFINE_ITERS, DEFAULT_TOLERANCE,
};
use crate::smooth::{self, PassStats, SmoothConfig, DEFAULT_SMOOTH_ITERATIONS, DEFAULT_SMOOTH_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FeatureMode {
    Off,
    Labels { path: PathBuf },
    Detector { k: usize, tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub n: usize,
    pub lambda: f64,
    pub voxel_factor: f64,
    pub k_smooth: usize,
    pub smooth_iterations: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub snap_back: bool,
    pub max_refine_iters: usize,
    pub tolerance: f64,
    pub over_step: OverCountStep,
    /// Attach consistency and uniformity metrics to the report.
    pub metrics: bool,
    /// Use symmetric distances in the consistency metrics.
    pub symmetric: bool,
}

impl ResampleConfig {
    pub fn new(n: usize) -> Self {
        ResampleConfig {
            n,
            lambda: DEFAULT_LAMBDA,
            voxel_factor: DEFAULT_VOXEL_FACTOR,
            k_smooth: DEFAULT_SMOOTH_K,
            smooth_iterations: DEFAULT_SMOOTH_ITERATIONS,
            feature_mode: FeatureMode::Off,
            seed: 0,
            snap_back: false,
            max_refine_iters: DEFAULT_MAX_REFINE_ITERS,
            tolerance: DEFAULT_TOLERANCE,
            over_step: OverCountStep::default(),
            metrics: false,
            symmetric: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n == 0 {
            return Err(Error::NonPositiveTarget);
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return bad(format!("tolerance must be in (0, 1), got {}", self.tolerance));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.voxel_factor > 0.0 && self.voxel_factor.is_finite()) {
            return bad(format!("voxel factor must be positive, got {}", self.voxel_factor));
        }
        if self.k_smooth < 3 {
            return bad(format!("smoothing k must be at least 3, got {}", self.k_smooth));
        }
        if self.max_refine_iters == 0 {
            return bad("max refinement iterations must be at least 1".into());
        }
        if let FeatureMode::Detector { k, tau } = self.feature_mode {
            if k < 3 {
                return bad(format!("detector k must be at least 3, got {k}"));
            }
            if !tau.is_finite() {
                return bad(format!("detector tau must be finite, got {tau}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelInfo {
    pub bbox: BoundingBox,
    pub l_v: f64,
    pub occupied: usize,
    pub dims: [i64; 3],
    /// `m * l_v^2`.
    pub area_voxel: f64,
    /// `2 (lw + lh + wh)`.
    pub area_bbox: f64,
}

pub fn voxel_info(cloud: &PointCloud, voxel_factor: f64) -> Result<VoxelInfo> {
    let bbox = compute_bbox(cloud)?;
    let grid = voxelize(cloud, voxel_length(&bbox, voxel_factor)?)?;
    Ok(VoxelInfo {
        bbox,
        l_v: grid.l_v,
        occupied: grid.m(),
        dims: grid.dims,
        area_voxel: poisson::estimate_area_voxel(&grid),
        area_bbox: estimate_area_bbox(&bbox),
    })
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub read: f64,
    pub voxelize: f64,
    pub classify: f64,
    pub refine: f64,
    pub trim: f64,
    pub smooth: f64,
    pub snap_back: f64,
    pub metrics: f64,
    pub write: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub consistency: ConsistencyReport,
    pub uniformity: UniformityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub input_count: usize,
    pub output_count: usize,
    pub seed: u64,
    pub voxel: VoxelInfo,
    pub initial_radius: f64,
    pub final_radius: f64,
    /// Half radius used for edge points in sharp mode.
    pub edge_radius: Option<f64>,
    pub refinement_iterations: usize,
    /// `(radius, count)` of every refinement pass.
    pub refinement_history: Vec<(f64, usize)>,
    pub refined_count: usize,
    pub trimmed: usize,
    pub class_source: Option<ClassSource>,
    pub edge_count: Option<usize>,
    pub smoothing: Vec<PassStats>,
    pub snapped: Option<usize>,
    pub timings: StageTimings,
    pub metrics: Option<MetricsReport>,
    pub config: ResampleConfig,
}

fn timed<T>(slot: &mut f64, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    *slot += t.elapsed().as_secs_f64();
    out
}

/// Runs the full pipeline on `cloud`. The output has exactly `config.n`
/// points; non-convergent refinement returns [`Error::NonConvergence`] with
/// the closest subset.
pub fn resample(cloud: &PointCloud, config: &ResampleConfig) -> Result<(PointCloud, RunReport)> {
    config.validate()?;
    cloud.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if config.n > cloud.len() {
        return Err(Error::TargetExceedsInput {
            target: config.n,
            available: cloud.len(),
        });
    }
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let (voxel, estimate) = timed(&mut timings.voxelize, || {
        let bbox = compute_bbox(cloud)?;
        let grid = voxelize(cloud, voxel_length(&bbox, config.voxel_factor)?)?;
        let estimate: RadiusEstimate = poisson::estimate_radius(&grid, config.n, config.lambda)?;
        let info = VoxelInfo {
            bbox,
            l_v: grid.l_v,
            occupied: grid.m(),
            dims: grid.dims,
            area_voxel: estimate.area,
            area_bbox: estimate_area_bbox(&bbox),
        };
        Ok((info, estimate))
    })?;

    let classification: Option<Classification> = timed(&mut timings.classify, || {
        Ok(match &config.feature_mode {
            FeatureMode::Off => None,
            FeatureMode::Labels { path } => Some(feature::load_labels(path, cloud.len())?),
            FeatureMode::Detector { k, tau } => Some(feature::detect_edges_covariance(cloud, *k, *tau)?),
        })
    })?;

    // Sharp mode works on a copy carrying the classes, which also drives edge
    // protection during smoothing. Otherwise any class attribute is ignored.
    let mut working = cloud.clone();
    working.classes = classification.as_ref().map(|c| c.classes.clone());
    let scale = working.classes.as_deref().map(feature::radius_scale);

    let opts = RefineOptions {
        seed: config.seed,
        max_iters: config.max_refine_iters,
        tolerance: config.tolerance,
        radius_scale: scale.as_deref(),
        over_step: config.over_step,
    };
    let refined = timed(&mut timings.refine, || {
        poisson::refine_indices(&working.points, config.n, estimate.r, &opts)
    })?;
    if !refined.converged {
        let mut best = working.select(&refined.indices);
        if classification.is_none() {
            best.classes = cloud.classes.as_ref().map(|c| refined.indices.iter().map(|&i| c[i]).collect());
        }
        return Err(Error::NonConvergence {
            iterations: refined.state.history.len(),
            best_count: best.len(),
            target: config.n,
            best: Box::new((best, refined.state)),
        });
    }
    let state = refined.state;

    let kept = timed(&mut timings.trim, || {
        let sub_points: Vec<_> = refined.indices.iter().map(|&i| working.points[i]).collect();
        let sub_scale: Option<Vec<f64>> = scale
            .as_ref()
            .map(|s| refined.indices.iter().map(|&i| s[i]).collect());
        let keep = smooth::trim_indices(&sub_points, config.n, sub_scale.as_deref())?;
        Ok(keep.into_iter().map(|k| refined.indices[k]).collect::<Vec<_>>())
    })?;
    let mut out = working.select(&kept);

    let smoothing = timed(&mut timings.smooth, || {
        if config.smooth_iterations == 0 {
            return Ok(Vec::new());
        }
        let sc = SmoothConfig {
            k: config.k_smooth,
            iterations: config.smooth_iterations,
        };
        let (smoothed, stats) = smooth::smooth(&out, &sc)?;
        out = smoothed;
        Ok(stats)
    })?;

    let snapped = timed(&mut timings.snap_back, || {
        if config.snap_back {
            smooth::snap_back(&mut out, &cloud.points).map(Some)
        } else {
            Ok(None)
        }
    })?;

    if classification.is_none() {
        out.classes = cloud.classes.as_ref().map(|c| kept.iter().map(|&i| c[i]).collect());
    }

    let metrics = timed(&mut timings.metrics, || {
        if !config.metrics {
            return Ok(None);
        }
        Ok(Some(MetricsReport {
            consistency: metrics::consistency_report(&out, cloud, config.symmetric)?,
            uniformity: metrics::uniformity_report(&out, DEFAULT_METRIC_K, true)?,
        }))
    })?;
    timings.total = start.elapsed().as_secs_f64();

    let report = RunReport {
        input_count: cloud.len(),
        output_count: out.len(),
        seed: config.seed,
        voxel,
        initial_radius: estimate.r,
        final_radius: state.r,
        edge_radius: classification.as_ref().map(|_| state.r / 2.0),
        refinement_iterations: state.iteration,
        refinement_history: state.history,
        refined_count: refined.indices.len(),
        trimmed: refined.indices.len() - config.n,
        class_source: classification.as_ref().map(|c| c.source),
        edge_count: out
            .classes
            .as_ref()
            .filter(|_| classification.is_some())
            .map(|c| c.iter().filter(|&&c| c == crate::cloud::PointClass::Edge).count()),
        smoothing,
        snapped,
        timings,
        metrics,
        config: config.clone(),
    };
    Ok((out, report))
}
