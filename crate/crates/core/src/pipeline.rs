//! Frame-by-frame driver shared by the command line and the tests: feeds
//! dataset frames to the filter, records the per-frame series and computes
//! the final metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{ate_rmse, dead_reckoning, heading_error, map_error, EvalError};
use crate::fastslam::{FastSlam, FilterError, FilterParams, FrameReport, Particle};
use crate::geom::{OdometryDelta, Point3, Pose2};
use crate::sim::Dataset;
use crate::stereo::{CameraCalib, StereoObservation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendMode {
    /// Stored stereo observations.
    Observations,
    /// Features extracted from the rendered image pairs.
    Images,
}

/// One row of the per-frame series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub neff: f64,
    pub resampled: bool,
    pub map_size: usize,
    pub mean_map_size: f64,
    pub observations: usize,
    pub matched: usize,
    pub new: usize,
    pub discarded: usize,
    pub dropped: usize,
}

impl FrameRecord {
    pub fn from_report(r: &FrameReport, observations: usize) -> Self {
        FrameRecord {
            frame: r.frame_index,
            x: r.best_pose.x,
            y: r.best_pose.y,
            theta: r.best_pose.theta,
            neff: r.neff,
            resampled: r.resampled,
            map_size: r.best_map_size,
            mean_map_size: r.mean_map_size,
            observations,
            matched: r.best_tally.matched,
            new: r.best_tally.new,
            discarded: r.best_tally.discarded,
            dropped: r.dropped_observations,
        }
    }

    pub fn pose(&self) -> Pose2 {
        Pose2 {
            x: self.x,
            y: self.y,
            theta: self.theta,
        }
    }
}

/// Filter plus the series recorded so far.
#[derive(Debug, Clone)]
pub struct Runner {
    pub slam: FastSlam,
    pub records: Vec<FrameRecord>,
    /// Ignore odometry and run in visual-only mode.
    pub visual_only: bool,
}

impl Runner {
    pub fn new(start: Pose2, params: FilterParams, calib: CameraCalib, seed: u64) -> Result<Self, FilterError> {
        Ok(Runner {
            slam: FastSlam::new(start, params, calib, seed)?,
            records: Vec::new(),
            visual_only: false,
        })
    }

    pub fn step(
        &mut self,
        odom: &OdometryDelta,
        observations: &[StereoObservation],
        truth_ids: Option<&[u64]>,
    ) -> &FrameRecord {
        let odom = (!self.visual_only).then_some(odom);
        let report = self.slam.step(odom, observations, truth_ids);
        self.records.push(FrameRecord::from_report(&report, observations.len()));
        self.records.last().unwrap()
    }

    pub fn trajectory(&self) -> Vec<Pose2> {
        self.records.iter().map(FrameRecord::pose).collect()
    }

    /// Highest-weight particle of the last processed frame.
    pub fn best_particle(&self) -> &Particle {
        self.slam.last_best.as_ref().unwrap_or_else(|| self.slam.state.best())
    }
}

/// Metrics of a finished run against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_frames: usize,
    pub ate_rmse_m: f64,
    pub dead_reckoning_ate_m: f64,
    pub final_position_error_m: f64,
    pub final_heading_error_rad: f64,
    /// Absent when no estimated landmark lies near a true one.
    pub mean_map_error_m: Option<f64>,
    pub map_matched_fraction: f64,
    pub map_size: usize,
    pub matched: usize,
    pub new: usize,
    pub discarded: usize,
    pub mean_neff: f64,
    pub resample_count: usize,
    pub runtime_seconds: f64,
    pub per_frame: Vec<FrameRecord>,
}

pub fn compute_metrics(
    records: &[FrameRecord],
    map: &[Point3],
    ground_truth: &[Pose2],
    true_landmarks: &[Point3],
    odometry: &[OdometryDelta],
    runtime_seconds: f64,
) -> Result<MetricsReport, EvalError> {
    let estimate: Vec<Pose2> = records.iter().map(FrameRecord::pose).collect();
    let ate = ate_rmse(&estimate, ground_truth)?;
    let start = ground_truth.first().copied().ok_or(EvalError::Empty)?;
    let dr = dead_reckoning(start, odometry);
    let dr_ate = ate_rmse(&dr, ground_truth)?;
    let (last_e, last_g) = (estimate.last().unwrap(), ground_truth.last().unwrap());
    let (mean_map_error_m, map_matched_fraction) = match map_error(map, true_landmarks) {
        Ok(m) => (Some(m.mean_error_m), m.matched_fraction),
        Err(EvalError::MatchEmpty) => (None, 0.0),
        Err(e) => return Err(e),
    };
    let sum = |f: fn(&FrameRecord) -> usize| records.iter().map(f).sum::<usize>();
    Ok(MetricsReport {
        n_frames: records.len(),
        ate_rmse_m: ate,
        dead_reckoning_ate_m: dr_ate,
        final_position_error_m: last_e.position_distance(last_g),
        final_heading_error_rad: heading_error(last_e, last_g),
        mean_map_error_m,
        map_matched_fraction,
        map_size: map.len(),
        matched: sum(|r| r.matched),
        new: sum(|r| r.new),
        discarded: sum(|r| r.discarded),
        mean_neff: records.iter().map(|r| r.neff).sum::<f64>() / records.len() as f64,
        resample_count: records.iter().filter(|r| r.resampled).count(),
        runtime_seconds,
        per_frame: records.to_vec(),
    })
}

/// Runs the filter over an in-memory dataset's observations and evaluates it.
pub fn run_dataset(
    dataset: &Dataset,
    params: FilterParams,
    seed: u64,
    oracle: bool,
    parallel: bool,
) -> Result<(Runner, MetricsReport), PipelineError> {
    let clock = std::time::Instant::now();
    let calib = dataset.manifest.config.calibration;
    let mut runner = Runner::new(dataset.manifest.start_pose, params, calib, seed)?;
    runner.slam.parallel = parallel;
    for f in &dataset.frames {
        runner.step(&f.odom, &f.observations, oracle.then_some(f.truth_ids.as_slice()));
    }
    let map: Vec<Point3> = runner.best_particle().landmarks.iter().map(|l| l.state.mean).collect();
    let truth: Vec<Point3> = dataset.world.landmarks.iter().map(|l| l.position).collect();
    let odom: Vec<OdometryDelta> = dataset.frames.iter().map(|f| f.odom).collect();
    let metrics = compute_metrics(
        &runner.records,
        &map,
        &dataset.ground_truth(),
        &truth,
        &odom,
        clock.elapsed().as_secs_f64(),
    )?;
    Ok((runner, metrics))
}
