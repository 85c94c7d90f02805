//! Frame-level driver: predict, associate, update, weight, resample.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::association::{associate_among, associate_oracle, visible_landmarks, Decision};
use super::landmark::{add_landmark, update_landmark_in_place};
use super::resample::{effective_sample_size, normalize_log_weights, resample_systematic};
use super::{predict, update_weight, AssociationTally, FilterError, FilterParams, MotionNoise, Particle};
use crate::geom::{OdometryDelta, Pose2, RngStream};
use crate::stereo::{CameraCalib, StereoObservation};

/// Stream-id component reserved for the resampling draw.
const RESAMPLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub particles: Vec<Particle>,
    /// Number of frames processed so far.
    pub frame_index: u64,
    pub seed: u64,
    pub params: FilterParams,
}

impl FilterState {
    /// All particles at `start` with uniform weight.
    pub fn new(start: Pose2, params: FilterParams, seed: u64) -> Result<Self, FilterError> {
        params.validate()?;
        let w = -(params.n_particles as f64).ln();
        let particles = (0..params.n_particles)
            .map(|_| Particle::new(start, w, params.keep_trajectories))
            .collect();
        Ok(FilterState {
            particles,
            frame_index: 0,
            seed,
            params,
        })
    }

    /// Index of the highest-weight particle (lowest index on ties).
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.log_weight > self.particles[best].log_weight {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> &Particle {
        &self.particles[self.best_index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_index: u64,
    pub best_pose: Pose2,
    pub neff: f64,
    pub resampled: bool,
    pub best_map_size: usize,
    pub mean_map_size: f64,
    /// Association outcome of the reported (best) particle.
    pub best_tally: AssociationTally,
    /// Sum over all particles.
    pub total_tally: AssociationTally,
    pub dropped_observations: usize,
}

/// Valid observations in processing order: nearest first (descending
/// disparity), ties broken by `(u, v)`. Returns kept indices and the number dropped.
pub fn processing_order(
    observations: &[StereoObservation],
    calib: &CameraCalib,
    params: &FilterParams,
) -> (Vec<usize>, usize) {
    let mut keep: Vec<usize> = (0..observations.len())
        .filter(|&i| observations[i].is_valid(calib, &params.stereo))
        .collect();
    let dropped = observations.len() - keep.len();
    keep.sort_by(|&a, &b| {
        let (oa, ob) = (&observations[a], &observations[b]);
        ob.d.total_cmp(&oa.d)
            .then(oa.u.total_cmp(&ob.u))
            .then(oa.v.total_cmp(&ob.v))
            .then(a.cmp(&b))
    });
    (keep, dropped)
}

struct FrameContext<'a> {
    calib: &'a CameraCalib,
    params: &'a FilterParams,
    motion: MotionNoise,
    odom: OdometryDelta,
    observations: &'a [StereoObservation],
    order: &'a [usize],
    truth_ids: Option<&'a [u64]>,
    seed: u64,
    frame: u64,
}

fn process_particle(ctx: &FrameContext, index: usize, particle: &mut Particle) -> AssociationTally {
    let params = ctx.params;
    let noise = &params.observation_noise;
    let mut rng = RngStream::derived(ctx.seed, &[index as u64, ctx.frame]);
    predict(particle, &ctx.odom, &ctx.motion, &mut rng);
    if let Some(traj) = particle.trajectory.as_mut() {
        traj.push(particle.pose);
    }

    let visible = visible_landmarks(particle, ctx.calib, params);
    let mut used = vec![false; particle.landmarks.len()];
    let mut tally = AssociationTally::default();
    let mut logliks = Vec::new();

    for &oi in ctx.order {
        let obs = &ctx.observations[oi];
        let decision = match ctx.truth_ids {
            Some(ids) => associate_oracle(ids[oi], obs, particle, ctx.calib, params),
            None => {
                let candidates: Vec<usize> = visible.iter().copied().filter(|&i| !used[i]).collect();
                associate_among(obs, particle, &candidates, ctx.calib, params)
            }
        };
        match decision {
            Decision::Matched { index: li, .. } => {
                let pose = particle.pose;
                match update_landmark_in_place(
                    &mut particle.landmarks[li],
                    obs,
                    &pose,
                    ctx.calib,
                    noise,
                    &params.stereo,
                ) {
                    Ok(ll) => {
                        used[li] = true;
                        particle.landmarks[li].misses = 0;
                        logliks.push(ll);
                        tally.matched += 1;
                    }
                    Err(_) => tally.discarded += 1,
                }
            }
            Decision::New => match add_landmark(particle, obs, ctx.calib, noise, &params.stereo) {
                Ok(_) => {
                    if let Some(ids) = ctx.truth_ids {
                        particle.landmarks.last_mut().unwrap().truth_id = Some(ids[oi]);
                    }
                    used.push(true);
                    tally.new += 1;
                }
                Err(_) => tally.discarded += 1,
            },
            Decision::Discard => tally.discarded += 1,
        }
    }

    for &i in &visible {
        if !used[i] {
            particle.landmarks[i].misses += 1;
        }
    }
    particle
        .landmarks
        .retain(|l| !(l.misses >= params.prune_misses && l.hits < params.prune_hits_below));

    update_weight(particle, &logliks, &tally, params);
    tally
}

/// Particle filter bound to a camera calibration.
#[derive(Debug, Clone)]
pub struct FastSlam {
    pub state: FilterState,
    pub calib: CameraCalib,
    /// Process particles on the rayon pool. Results are identical either way.
    pub parallel: bool,
    /// Highest-weight particle of the last frame, taken before resampling.
    pub last_best: Option<Particle>,
}

impl FastSlam {
    pub fn new(start: Pose2, params: FilterParams, calib: CameraCalib, seed: u64) -> Result<Self, FilterError> {
        calib.validate()?;
        Ok(FastSlam {
            state: FilterState::new(start, params, seed)?,
            calib,
            parallel: true,
            last_best: None,
        })
    }

    pub fn from_state(state: FilterState, calib: CameraCalib) -> Result<Self, FilterError> {
        state.params.validate()?;
        calib.validate()?;
        Ok(FastSlam {
            state,
            calib,
            parallel: true,
            last_best: None,
        })
    }

    /// Processes one frame. `odom = None` selects visual-only mode: zero
    /// motion with inflated noise floors. `truth_ids`, when given, replaces
    /// data association with known correspondences (one id per observation).
    pub fn step(
        &mut self,
        odom: Option<&OdometryDelta>,
        observations: &[StereoObservation],
        truth_ids: Option<&[u64]>,
    ) -> FrameReport {
        if let Some(ids) = truth_ids {
            assert_eq!(ids.len(), observations.len(), "one truth id per observation");
        }
        let params = &self.state.params;
        let mut motion = params.motion_noise;
        if odom.is_none() {
            motion.translation[2] += params.visual_only_floor[0];
            motion.rotation[2] += params.visual_only_floor[1];
        }
        let (order, dropped) = processing_order(observations, &self.calib, params);
        let ctx = FrameContext {
            calib: &self.calib,
            params,
            motion,
            odom: odom.copied().unwrap_or_default(),
            observations,
            order: &order,
            truth_ids,
            seed: self.state.seed,
            frame: self.state.frame_index,
        };

        let tallies: Vec<AssociationTally> = if self.parallel {
            self.state
                .particles
                .par_iter_mut()
                .enumerate()
                .map(|(i, p)| process_particle(&ctx, i, p))
                .collect()
        } else {
            self.state
                .particles
                .iter_mut()
                .enumerate()
                .map(|(i, p)| process_particle(&ctx, i, p))
                .collect()
        };

        normalize_log_weights(&mut self.state.particles);
        let neff = effective_sample_size(&self.state.particles);
        let best = self.state.best_index();
        let best_particle = &self.state.particles[best];
        let n = self.state.particles.len();
        let total_tally = tallies
            .iter()
            .fold(AssociationTally::default(), |a, t| AssociationTally {
                matched: a.matched + t.matched,
                new: a.new + t.new,
                discarded: a.discarded + t.discarded,
            });
        let resampled = neff.partial_cmp(&(self.state.params.neff_fraction * n as f64)) == Some(Ordering::Less);
        let report = FrameReport {
            frame_index: self.state.frame_index,
            best_pose: best_particle.pose,
            neff,
            resampled,
            best_map_size: best_particle.landmarks.len(),
            mean_map_size: self.state.particles.iter().map(|p| p.landmarks.len()).sum::<usize>() as f64 / n as f64,
            best_tally: tallies[best],
            total_tally,
            dropped_observations: dropped,
        };

        self.last_best = Some(best_particle.clone());
        if resampled {
            let mut rng = RngStream::derived(self.state.seed, &[RESAMPLE_STREAM, self.state.frame_index]);
            self.state.particles = resample_systematic(&self.state.particles, &mut rng);
        }
        self.state.frame_index += 1;
        report
    }
}
