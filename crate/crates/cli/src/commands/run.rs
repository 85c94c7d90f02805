//! `vslam run`: filter a dataset and write trajectory, map, metrics and the
//! per-frame report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use vslam_core::fastslam::{FilterParams, FilterState, Particle};
use vslam_core::features::SiftParams;
use vslam_core::frontend::image_observations;
use vslam_core::geom::{OdometryDelta, Point3};
use vslam_core::pipeline::{compute_metrics, FrameRecord, FrontendMode, MetricsReport, Runner};
use vslam_core::sim::dataset::{read_frame_images, read_gt_landmarks, read_gt_trajectory, read_oracle};
use vslam_core::sim::read_filter_inputs;

use crate::output::{csv_bytes, with_overrides, write_atomic, write_json};
use crate::{CliError, CliResult, RunArgs};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything besides the seed that determines a run's results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEcho {
    pub dataset: String,
    pub mode: FrontendMode,
    pub oracle_assoc: bool,
    pub visual_only: bool,
    pub filter: FilterParams,
}

#[derive(Debug, Serialize)]
struct MetricsFile<'a> {
    seed: u64,
    config: &'a RunEcho,
    #[serde(flatten)]
    metrics: &'a MetricsReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapLandmark {
    pub id: u64,
    pub mean: [f64; 3],
    /// Row-major 3x3 covariance, m².
    pub cov: [f64; 9],
    pub hits: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapFile {
    pub landmarks: Vec<MapLandmark>,
}

impl MapFile {
    pub fn from_particle(p: &Particle) -> MapFile {
        MapFile {
            landmarks: p
                .landmarks
                .iter()
                .map(|l| {
                    let m = &l.state.mean;
                    let c = &l.state.cov;
                    MapLandmark {
                        id: l.id,
                        mean: [m.x, m.y, m.z],
                        cov: std::array::from_fn(|k| c[(k / 3, k % 3)]),
                        hits: l.hits,
                    }
                })
                .collect(),
        }
    }

    pub fn means(&self) -> Vec<Point3> {
        self.landmarks
            .iter()
            .map(|l| Point3::new(l.mean[0], l.mean[1], l.mean[2]))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    seed: u64,
    config: RunEcho,
    next_frame: usize,
    state: FilterState,
    records: Vec<FrameRecord>,
    last_best: Option<Particle>,
}

pub fn checkpoint_path(out: &Path, frame: usize) -> PathBuf {
    out.join("checkpoints").join(format!("checkpoint_{frame:06}.json"))
}

pub fn trajectory_csv(records: &[FrameRecord]) -> Vec<u8> {
    csv_bytes(
        &["frame", "x", "y", "theta"],
        records.iter().map(|r| {
            vec![
                r.frame.to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.theta.to_string(),
            ]
        }),
    )
}

fn report_csv(records: &[FrameRecord]) -> Vec<u8> {
    csv_bytes(
        &[
            "frame",
            "x",
            "y",
            "theta",
            "neff",
            "resampled",
            "map_size",
            "mean_map_size",
            "observations",
            "matched",
            "new",
            "discarded",
            "dropped",
        ],
        records.iter().map(|r| {
            vec![
                r.frame.to_string(),
                r.x.to_string(),
                r.y.to_string(),
                r.theta.to_string(),
                r.neff.to_string(),
                (r.resampled as u8).to_string(),
                r.map_size.to_string(),
                r.mean_map_size.to_string(),
                r.observations.to_string(),
                r.matched.to_string(),
                r.new.to_string(),
                r.discarded.to_string(),
                r.dropped.to_string(),
            ]
        }),
    )
}

fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn configure_threads(args: &RunArgs) -> CliResult<()> {
    if let Some(n) = args.threads {
        // a second call in the same process is harmless; the first pool stays
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run(args: &RunArgs) -> CliResult<()> {
    let clock = Instant::now();
    let mode: FrontendMode = args.mode.into();
    if args.oracle_assoc && mode == FrontendMode::Images {
        return Err(CliError::Usage("--oracle-assoc requires --mode observations".into()));
    }
    if args.checkpoint_every == Some(0) {
        return Err(CliError::Usage("--checkpoint-every must be >= 1".into()));
    }
    let mut filter = with_overrides(FilterParams::default(), args.config.as_deref())?;
    if let Some(n) = args.particles {
        filter.n_particles = n;
    }
    filter.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    configure_threads(args)?;

    if !args.dataset.is_dir() {
        return Err(CliError::Data(format!(
            "dataset directory not found: {}",
            args.dataset.display()
        )));
    }
    let (manifest, frames) = read_filter_inputs(&args.dataset).map_err(data)?;
    if mode == FrontendMode::Images && !manifest.has_images() {
        return Err(CliError::Data(format!(
            "{}: dataset has no rendered images",
            args.dataset.display()
        )));
    }
    let oracle = if args.oracle_assoc {
        let counts: Vec<usize> = frames.iter().map(|f| f.observations.len()).collect();
        Some(read_oracle(&args.dataset, &manifest, &counts).map_err(data)?)
    } else {
        None
    };
    let seed = args.seed.unwrap_or(manifest.config.seed);
    let echo = RunEcho {
        dataset: args.dataset.display().to_string(),
        mode,
        oracle_assoc: args.oracle_assoc,
        visual_only: args.visual_only,
        filter: filter.clone(),
    };
    let calib = manifest.config.calibration;

    let mut runner =
        Runner::new(manifest.start_pose, filter, calib, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    runner.visual_only = args.visual_only;
    runner.slam.parallel = !args.serial;
    let mut first = 0;
    if let Some(path) = &args.resume {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let cp: Checkpoint =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if cp.version != CHECKPOINT_VERSION || cp.seed != seed || cp.config != echo {
            return Err(CliError::Usage(format!(
                "{}: checkpoint was written by a run with different settings",
                path.display()
            )));
        }
        if cp.next_frame > frames.len() || cp.records.len() != cp.next_frame {
            return Err(CliError::Data(format!("{}: inconsistent checkpoint", path.display())));
        }
        runner.slam.state = cp.state;
        runner.slam.last_best = cp.last_best;
        runner.records = cp.records;
        first = cp.next_frame;
    }

    let sift = SiftParams::default();
    let stereo = runner.slam.state.params.stereo;
    for f in &frames[first..] {
        let observations = match mode {
            FrontendMode::Observations => f.observations.clone(),
            FrontendMode::Images => {
                let (l, r) = read_frame_images(&args.dataset, &manifest, f.frame_index).map_err(data)?;
                image_observations(&l, &r, &calib, &sift, &stereo).map_err(data)?
            }
        };
        let ids = oracle.as_ref().map(|o| o[f.frame_index].as_slice());
        runner.step(&f.odom, &observations, ids);
        let done = f.frame_index + 1;
        if let Some(every) = args.checkpoint_every {
            if done % every == 0 {
                let cp = Checkpoint {
                    version: CHECKPOINT_VERSION,
                    seed,
                    config: echo.clone(),
                    next_frame: done,
                    state: runner.slam.state.clone(),
                    records: runner.records.clone(),
                    last_best: runner.slam.last_best.clone(),
                };
                write_json(&checkpoint_path(&args.out, done), &cp)?;
            }
        }
    }

    let gt = read_gt_trajectory(&args.dataset, &manifest).map_err(data)?;
    let world = read_gt_landmarks(&args.dataset, &manifest).map_err(data)?;
    let truth: Vec<Point3> = world.landmarks.iter().map(|l| l.position).collect();
    let odom: Vec<OdometryDelta> = frames.iter().map(|f| f.odom).collect();
    let map = MapFile::from_particle(runner.best_particle());
    let metrics = compute_metrics(
        &runner.records,
        &map.means(),
        &gt,
        &truth,
        &odom,
        clock.elapsed().as_secs_f64(),
    )
    .map_err(data)?;

    write_atomic(&args.out.join("trajectory.csv"), &trajectory_csv(&runner.records))?;
    write_json(&args.out.join("map.json"), &map)?;
    write_atomic(&args.out.join("report.csv"), &report_csv(&runner.records))?;
    write_json(
        &args.out.join("metrics.json"),
        &MetricsFile {
            seed,
            config: &echo,
            metrics: &metrics,
        },
    )?;
    println!(
        "frames {}  ate {:.4} m  dead-reckoning ate {:.4} m  map {} landmarks",
        metrics.n_frames, metrics.ate_rmse_m, metrics.dead_reckoning_ate_m, metrics.map_size
    );
    Ok(())
}
