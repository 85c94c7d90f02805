//! Rao-Blackwellized particle filter: each particle carries a pose hypothesis
//! and its own map of independently filtered 3D landmarks.

pub mod association;
pub mod filter;
pub mod landmark;
pub mod resample;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Descriptor;
use crate::geom::{Gaussian3, OdometryDelta, Pose2, RngStream};
use crate::stereo::{ObservationNoise, StereoParams};

pub use association::{associate, Decision};
pub use filter::{FastSlam, FilterState, FrameReport};
pub use landmark::{add_landmark, update_landmark};
pub use resample::{effective_sample_size, normalize_log_weights, resample_systematic};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("innovation covariance is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Stereo(#[from] crate::stereo::StereoError),
    #[error("invalid filter parameters: {0}")]
    InvalidParams(String),
}

/// Odometry noise model. Standard deviations are
/// `a[0] * |translation| + a[1] * |rotation| + a[2]`, one triple for the
/// translational components (m) and one for the heading (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub translation: [f64; 3],
    pub rotation: [f64; 3],
}

impl Default for MotionNoise {
    fn default() -> Self {
        MotionNoise {
            translation: [0.05, 0.0, 0.002],
            rotation: [0.02, 0.05, 0.001],
        }
    }
}

impl MotionNoise {
    pub fn zero() -> Self {
        MotionNoise {
            translation: [0.0; 3],
            rotation: [0.0; 3],
        }
    }

    /// `(translation std, heading std)` for a commanded motion.
    pub fn stds(&self, odom: &OdometryDelta) -> (f64, f64) {
        let t = odom.translation_norm();
        let r = odom.dtheta.abs();
        let f = |a: &[f64; 3]| a[0] * t + a[1] * r + a[2];
        (f(&self.translation), f(&self.rotation))
    }

    /// Odometry-plus-noise draw: three standard normals, always consumed.
    pub fn sample(&self, odom: &OdometryDelta, rng: &mut RngStream) -> OdometryDelta {
        let (st, sr) = self.stds(odom);
        let n = [rng.standard_normal(), rng.standard_normal(), rng.standard_normal()];
        OdometryDelta::new(odom.dx + st * n[0], odom.dy + st * n[1], odom.dtheta + sr * n[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub n_particles: usize,
    pub motion_noise: MotionNoise,
    /// Added to both noise floors when no odometry is supplied.
    pub visual_only_floor: [f64; 2],
    /// Measurement noise assumed by the landmark filters. Wider than the
    /// sensor's own noise so that particles a motion-noise step away from the
    /// truth still pass the gate.
    pub observation_noise: ObservationNoise,
    pub stereo: StereoParams,
    /// Mahalanobis-squared gate (chi-square, 3 dof, 0.99).
    pub gate_sq: f64,
    pub ratio_threshold: f64,
    /// Descriptor distances above this never count as a descriptor match.
    pub max_descriptor_distance: f64,
    pub new_landmark_logweight_penalty: f64,
    /// Defaults to the new-landmark penalty.
    pub discard_logweight_penalty: Option<f64>,
    pub neff_fraction: f64,
    pub prune_misses: u32,
    /// Only landmarks with fewer hits than this are pruned.
    pub prune_hits_below: u32,
    pub keep_trajectories: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            n_particles: 100,
            motion_noise: MotionNoise::default(),
            visual_only_floor: [0.05, 0.05],
            observation_noise: ObservationNoise {
                sigma_u: 1.5,
                sigma_v: 1.5,
                sigma_d: 2.0,
            },
            stereo: StereoParams::default(),
            gate_sq: 11.345,
            ratio_threshold: 0.8,
            max_descriptor_distance: 0.6,
            new_landmark_logweight_penalty: -8.0,
            discard_logweight_penalty: None,
            neff_fraction: 0.5,
            prune_misses: 5,
            prune_hits_below: 2,
            keep_trajectories: false,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |m: &str| Err(FilterError::InvalidParams(m.to_string()));
        if self.n_particles == 0 {
            return bad("n_particles must be >= 1");
        }
        if !(self.gate_sq > 0.0) {
            return bad("gate_sq must be positive");
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return bad("ratio_threshold must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.neff_fraction) {
            return bad("neff_fraction must be in [0, 1]");
        }
        let n = &self.observation_noise;
        if !(n.sigma_u > 0.0 && n.sigma_v > 0.0 && n.sigma_d > 0.0) {
            return bad("observation noise must be positive");
        }
        let m = &self.motion_noise;
        if m.translation.iter().chain(&m.rotation).any(|a| !(*a >= 0.0)) {
            return bad("motion noise coefficients must be non-negative");
        }
        Ok(())
    }

    pub fn discard_penalty(&self) -> f64 {
        self.discard_logweight_penalty
            .unwrap_or(self.new_landmark_logweight_penalty)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkEstimate {
    pub id: u64,
    pub state: Gaussian3,
    /// First observed descriptor; immutable and shared between particle copies.
    pub descriptor: Arc<Descriptor>,
    pub hits: u32,
    pub misses: u32,
    /// Ground-truth id, only populated under oracle association.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose2,
    pub log_weight: f64,
    pub landmarks: Vec<LandmarkEstimate>,
    pub next_landmark_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<Pose2>>,
}

impl Particle {
    pub fn new(pose: Pose2, log_weight: f64, keep_trajectory: bool) -> Self {
        Particle {
            pose,
            log_weight,
            landmarks: Vec::new(),
            next_landmark_id: 0,
            trajectory: keep_trajectory.then(|| vec![pose]),
        }
    }

    pub fn landmark(&self, id: u64) -> Option<&LandmarkEstimate> {
        self.landmarks.iter().find(|l| l.id == id)
    }
}

/// Samples a new pose from the motion model. The map is untouched.
pub fn predict(particle: &mut Particle, odom: &OdometryDelta, noise: &MotionNoise, rng: &mut RngStream) {
    let noisy = noise.sample(odom, rng);
    particle.pose = particle.pose.compose(&noisy);
}

/// Per-frame association outcome for one particle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationTally {
    pub matched: usize,
    pub new: usize,
    pub discarded: usize,
}

/// Adds the frame's evidence to the particle's log weight.
pub fn update_weight(
    particle: &mut Particle,
    log_likelihoods: &[f64],
    tally: &AssociationTally,
    params: &FilterParams,
) {
    let evidence: f64 = log_likelihoods.iter().sum::<f64>()
        + tally.new as f64 * params.new_landmark_logweight_penalty
        + tally.discarded as f64 * params.discard_penalty();
    particle.log_weight += evidence;
}
