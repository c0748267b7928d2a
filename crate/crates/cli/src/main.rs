use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wpd::feature::{self, DEFAULT_DETECT_K, DEFAULT_DETECT_TAU};
use wpd::metrics::{self, DEFAULT_METRIC_K};
use wpd::pipeline::{self, VoxelInfo};
use wpd::poisson::{self, DEFAULT_LAMBDA, DEFAULT_MAX_REFINE_ITERS, DEFAULT_TOLERANCE};
use wpd::smooth::{DEFAULT_SMOOTH_ITERATIONS, DEFAULT_SMOOTH_K};
use wpd::{
    cloud, io, read_cloud, write_cloud, CloudFormat, ConsistencyReport, Error, FeatureMode, ResampleConfig,
    UniformityReport,
};

/// Environment variable overriding the worker thread count.
const THREADS_ENV: &str = "WPD_THREADS";

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_PARSE: u8 = 3;
const EXIT_NON_CONVERGENCE: u8 = 4;

#[derive(Parser)]
#[command(name = "wpd", version, about = "Weighted Poisson-disk point cloud resampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resample a cloud to exactly N points.
    Resample(ResampleArgs),
    /// Compare a resampled cloud against its source.
    Metrics(MetricsArgs),
    /// Write per-point edge labels (0 or 1 per line).
    DetectEdges(DetectArgs),
    /// Report the bounding box, voxel grid and area estimates of a cloud.
    VoxelInfo(VoxelArgs),
}

#[derive(Args)]
struct ResampleArgs {
    input: PathBuf,
    output: PathBuf,
    /// Target point count.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = cloud::DEFAULT_VOXEL_FACTOR)]
    voxel_factor: f64,
    /// Neighbors per tangent neighborhood during smoothing.
    #[arg(long, default_value_t = DEFAULT_SMOOTH_K)]
    k: usize,
    /// Smoothing passes.
    #[arg(long, default_value_t = DEFAULT_SMOOTH_ITERATIONS)]
    iters: usize,
    /// `labels:<path>` or `detect[:k,tau]`.
    #[arg(long, value_parser = parse_sharp)]
    sharp: Option<FeatureMode>,
    /// Move every output point onto its nearest input point.
    #[arg(long)]
    snap_back: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_REFINE_ITERS)]
    max_refine_iters: usize,
    /// Accepted relative count overshoot during refinement.
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Attach consistency and uniformity metrics to the report.
    #[arg(long)]
    metrics: bool,
    /// Symmetric distances in the attached metrics.
    #[arg(long)]
    symmetric: bool,
    /// Write ASCII instead of binary PLY.
    #[arg(long)]
    ascii: bool,
}

#[derive(Args)]
struct MetricsArgs {
    original: PathBuf,
    resampled: PathBuf,
    /// Report symmetric Hausdorff and mean distances.
    #[arg(long)]
    symmetric: bool,
    #[arg(long, default_value_t = DEFAULT_METRIC_K)]
    k: usize,
    /// Include points with open tangent cells in the local density spread.
    #[arg(long)]
    all_points: bool,
}

#[derive(Args)]
struct DetectArgs {
    input: PathBuf,
    labels: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DETECT_K)]
    k: usize,
    #[arg(long, default_value_t = DEFAULT_DETECT_TAU)]
    tau: f64,
}

#[derive(Args)]
struct VoxelArgs {
    input: PathBuf,
    #[arg(long, default_value_t = cloud::DEFAULT_VOXEL_FACTOR)]
    voxel_factor: f64,
    /// Also report the initial Poisson radius for this target count.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
}

fn parse_sharp(s: &str) -> Result<FeatureMode, String> {
    if let Some(path) = s.strip_prefix("labels:") {
        if path.is_empty() {
            return Err("labels: needs a file path".into());
        }
        return Ok(FeatureMode::Labels { path: path.into() });
    }
    let rest = s
        .strip_prefix("detect")
        .ok_or_else(|| format!("expected labels:<path> or detect[:k,tau], got {s:?}"))?;
    if rest.is_empty() {
        return Ok(FeatureMode::Detector {
            k: DEFAULT_DETECT_K,
            tau: DEFAULT_DETECT_TAU,
        });
    }
    let args = rest
        .strip_prefix(':')
        .ok_or_else(|| format!("expected detect[:k,tau], got {s:?}"))?;
    let (k, tau) = args
        .split_once(',')
        .ok_or_else(|| format!("expected detect:k,tau, got {s:?}"))?;
    let k = k.trim().parse().map_err(|_| format!("invalid detector k {k:?}"))?;
    let tau = tau.trim().parse().map_err(|_| format!("invalid detector tau {tau:?}"))?;
    Ok(FeatureMode::Detector { k, tau })
}

/// A failure together with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidConfig(_)
            | Error::NonPositiveTarget
            | Error::TargetExceedsInput { .. }
            | Error::CannotTrim { .. }
            | Error::InvalidRadius(_)
            | Error::InvalidVoxelLength(_)
            | Error::UnsupportedFormat { .. } => EXIT_USAGE,
            Error::Parse { .. } | Error::LabelParse { .. } | Error::LabelCountMismatch { .. } => EXIT_PARSE,
            Error::NonConvergence { .. } => EXIT_NON_CONVERGENCE,
            _ => EXIT_FAILURE,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: EXIT_FAILURE,
        message: format!("cannot serialize report: {e}"),
    })?;
    println!("{text}");
    Ok(())
}

fn partial_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

#[derive(Serialize)]
struct NonConvergenceReport {
    error: String,
    iterations: usize,
    best_count: usize,
    target: usize,
    final_radius: f64,
    refinement_history: Vec<(f64, usize)>,
    partial: PathBuf,
}

fn run_resample(a: ResampleArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let format = CloudFormat::from_path(&a.output, a.ascii)?;
    let config = ResampleConfig {
        lambda: a.lambda,
        voxel_factor: a.voxel_factor,
        k_smooth: a.k,
        smooth_iterations: a.iters,
        feature_mode: a.sharp.unwrap_or(FeatureMode::Off),
        seed: a.seed,
        snap_back: a.snap_back,
        max_refine_iters: a.max_refine_iters,
        tolerance: a.tolerance,
        metrics: a.metrics,
        symmetric: a.symmetric,
        ..ResampleConfig::new(a.n)
    };
    config.validate()?;

    let t = Instant::now();
    let input = read_cloud(&a.input)?;
    let read_time = t.elapsed().as_secs_f64();

    let (out, mut report) = match pipeline::resample(&input, &config) {
        Ok(r) => r,
        Err(e) => {
            let Error::NonConvergence {
                iterations,
                best_count,
                target,
                best,
            } = &e
            else {
                return Err(e.into());
            };
            let (cloud, state) = best.as_ref();
            let partial = partial_path(&a.output);
            write_cloud(cloud, &partial, format)?;
            print_json(&NonConvergenceReport {
                error: e.to_string(),
                iterations: *iterations,
                best_count: *best_count,
                target: *target,
                final_radius: state.r,
                refinement_history: state.history.clone(),
                partial: partial.clone(),
            })?;
            return Err(Failure {
                code: EXIT_NON_CONVERGENCE,
                message: format!("{e}; best-effort cloud written to {}", partial.display()),
            });
        }
    };

    let t = Instant::now();
    write_cloud(&out, &a.output, format)?;
    report.timings.write = t.elapsed().as_secs_f64();
    report.timings.read = read_time;
    report.timings.total = start.elapsed().as_secs_f64();
    print_json(&report)
}

#[derive(Serialize)]
struct MetricsOutput {
    original: PathBuf,
    resampled: PathBuf,
    original_count: usize,
    resampled_count: usize,
    consistency: ConsistencyReport,
    uniformity: UniformityReport,
}

fn run_metrics(a: MetricsArgs) -> Result<(), Failure> {
    let original = read_cloud(&a.original)?;
    let resampled = read_cloud(&a.resampled)?;
    let consistency = metrics::consistency_report(&resampled, &original, a.symmetric)?;
    let uniformity = metrics::uniformity_report(&resampled, a.k, !a.all_points)?;
    print_json(&MetricsOutput {
        original: a.original,
        resampled: a.resampled,
        original_count: original.len(),
        resampled_count: resampled.len(),
        consistency,
        uniformity,
    })
}

#[derive(Serialize)]
struct DetectOutput {
    input: PathBuf,
    labels: PathBuf,
    k: usize,
    tau: f64,
    points: usize,
    edges: usize,
}

fn run_detect(a: DetectArgs) -> Result<(), Failure> {
    if a.k < 1 {
        return Err(Error::InvalidConfig("k must be at least 1".into()).into());
    }
    let input = read_cloud(&a.input)?;
    let classes = feature::detect_edges_covariance(&input, a.k, a.tau)?;
    io::write_atomic(&a.labels, feature::format_labels(&classes.classes).as_bytes())?;
    print_json(&DetectOutput {
        input: a.input,
        labels: a.labels,
        k: a.k,
        tau: a.tau,
        points: input.len(),
        edges: classes.edge_count(),
    })
}

#[derive(Serialize)]
struct VoxelOutput {
    input: PathBuf,
    points: usize,
    voxel_factor: f64,
    #[serde(flatten)]
    info: VoxelInfo,
    initial_radius: Option<f64>,
}

fn run_voxel_info(a: VoxelArgs) -> Result<(), Failure> {
    let input = read_cloud(&a.input)?;
    let info = pipeline::voxel_info(&input, a.voxel_factor)?;
    let initial_radius = match a.n {
        Some(n) => {
            let grid = cloud::voxelize(&input, info.l_v)?;
            Some(poisson::estimate_radius(&grid, n, a.lambda)?.r)
        }
        None => None,
    };
    print_json(&VoxelOutput {
        input: a.input,
        points: input.len(),
        voxel_factor: a.voxel_factor,
        info,
        initial_radius,
    })
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| Failure {
        code: EXIT_USAGE,
        message: format!("{THREADS_ENV} must be a non-negative integer, got {value:?}"),
    })?;
    // Zero keeps the default of one thread per core.
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure {
            code: EXIT_FAILURE,
            message: format!("cannot start thread pool: {e}"),
        })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Resample(a) => run_resample(a),
        Command::Metrics(a) => run_metrics(a),
        Command::DetectEdges(a) => run_detect(a),
        Command::VoxelInfo(a) => run_voxel_info(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sharp_specs() {
        assert_eq!(
            parse_sharp("labels:a/b.txt").unwrap(),
            FeatureMode::Labels { path: "a/b.txt".into() }
        );
        assert_eq!(
            parse_sharp("detect").unwrap(),
            FeatureMode::Detector {
                k: DEFAULT_DETECT_K,
                tau: DEFAULT_DETECT_TAU
            }
        );
        assert_eq!(parse_sharp("detect:8,0.2").unwrap(), FeatureMode::Detector { k: 8, tau: 0.2 });
        for bad in ["labels:", "detect:8", "detect:x,0.1", "edges", "detect8,1"] {
            assert!(parse_sharp(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn partial_suffix() {
        assert_eq!(partial_path(Path::new("out/x.ply")), PathBuf::from("out/x.ply.partial"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::from(Error::NonPositiveTarget).code, EXIT_USAGE);
        assert_eq!(
            Failure::from(Error::Parse {
                path: "a".into(),
                location: "line 1".into(),
                message: "x".into()
            })
            .code,
            EXIT_PARSE
        );
        assert_eq!(Failure::from(Error::EmptyInput).code, EXIT_FAILURE);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
