//! Simulated stereo front end: noisy measurements of visible landmarks.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::world::WorldModel;
use crate::features::Descriptor;
use crate::geom::{sample_gaussian, Pose2, RngStream};
use crate::stereo::{project, CameraCalib, ObservationNoise, StereoObservation, StereoParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    pub noise: ObservationNoise,
    /// Per-component descriptor noise before renormalization.
    pub sigma_desc: f64,
    pub detection_prob: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            noise: ObservationNoise::default(),
            sigma_desc: 0.02,
            detection_prob: 0.9,
        }
    }
}

/// Observation plus the id of the landmark that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedObservation {
    pub observation: StereoObservation,
    pub landmark_id: u64,
}

fn noisy_descriptor(gt: &Descriptor, sigma: f64, rng: &mut RngStream) -> Descriptor {
    if sigma == 0.0 {
        return gt.clone();
    }
    let raw: Vec<f64> = gt
        .values()
        .iter()
        .map(|v| (v + sigma * rng.standard_normal()).max(0.0))
        .collect();
    Descriptor::from_raw(&raw).unwrap_or_else(|_| gt.clone())
}

/// Observations of every landmark visible from `pose`, each kept with
/// probability `detection_prob`, in landmark order.
pub fn observe(
    pose: &Pose2,
    world: &WorldModel,
    calib: &CameraCalib,
    stereo: &StereoParams,
    sensor: &SensorModel,
    rng: &mut RngStream,
) -> Vec<TaggedObservation> {
    let cov = sensor.noise.covariance();
    let (w, h) = (calib.width as f64, calib.height as f64);
    let mut out = Vec::new();
    for lm in &world.landmarks {
        let proj = project(&lm.position, pose, calib, stereo);
        if !proj.visible {
            continue;
        }
        if rng.uniform() >= sensor.detection_prob {
            continue;
        }
        let z: Vector3<f64> = sample_gaussian(&proj.measurement, &cov, rng).expect("diagonal noise covariance is PSD");
        let d = z.z.max(stereo.min_disparity_px + 1e-6);
        let observation = StereoObservation {
            u: z.x,
            v: z.y,
            d,
            descriptor: noisy_descriptor(&lm.descriptor, sensor.sigma_desc, rng),
        };
        if !(0.0..w).contains(&z.x) || !(0.0..h).contains(&z.y) || !observation.is_valid(calib, stereo) {
            continue;
        }
        out.push(TaggedObservation {
            observation,
            landmark_id: lm.id,
        });
    }
    out
}
