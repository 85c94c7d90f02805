//! Two-stage data association: descriptor shortlist, then Mahalanobis gate.

use serde::{Deserialize, Serialize};

use super::landmark::{innovation, log_likelihood};
use super::{FilterParams, Particle};
use crate::stereo::{project, CameraCalib, StereoObservation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    /// Index into the particle's landmark list.
    Matched {
        index: usize,
        mahalanobis_sq: f64,
    },
    New,
    /// Descriptor candidates exist but none passes the gate.
    Discard,
}

/// Indices of landmarks predicted visible from the particle's current pose.
pub fn visible_landmarks(particle: &Particle, calib: &CameraCalib, params: &FilterParams) -> Vec<usize> {
    particle
        .landmarks
        .iter()
        .enumerate()
        .filter(|(_, lm)| project(&lm.state.mean, &particle.pose, calib, &params.stereo).visible)
        .map(|(i, _)| i)
        .collect()
}

/// Descriptor stage: candidates within the absolute distance limit whose
/// distance is within `1 / ratio_threshold` of the nearest one. A distinctive
/// nearest neighbour yields a single candidate; aliased descriptors keep every
/// plausible landmark for the geometric stage.
pub fn descriptor_shortlist(
    obs: &StereoObservation,
    particle: &Particle,
    candidates: &[usize],
    params: &FilterParams,
) -> Vec<usize> {
    let dists: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&i| (i, particle.landmarks[i].descriptor.distance(&obs.descriptor)))
        .filter(|(_, d)| *d <= params.max_descriptor_distance)
        .collect();
    let Some(best) = dists.iter().map(|(_, d)| *d).min_by(f64::total_cmp) else {
        return Vec::new();
    };
    dists
        .into_iter()
        .filter(|(_, d)| best >= params.ratio_threshold * d)
        .map(|(i, _)| i)
        .collect()
}

/// Association against an explicit candidate set.
pub fn associate_among(
    obs: &StereoObservation,
    particle: &Particle,
    candidates: &[usize],
    calib: &CameraCalib,
    params: &FilterParams,
) -> Decision {
    let shortlist = descriptor_shortlist(obs, particle, candidates, params);
    if shortlist.is_empty() {
        return Decision::New;
    }
    let z = obs.measurement();
    let mut best: Option<(usize, f64)> = None;
    for i in shortlist {
        let lm = &particle.landmarks[i];
        let Ok(inn) = innovation(lm, &z, &particle.pose, calib, &params.observation_noise, &params.stereo) else {
            continue;
        };
        let Ok((_, m)) = log_likelihood(&inn.residual, &inn.covariance) else {
            continue;
        };
        if m <= params.gate_sq && best.is_none_or(|(_, bm)| m < bm) {
            best = Some((i, m));
        }
    }
    match best {
        Some((index, mahalanobis_sq)) => Decision::Matched { index, mahalanobis_sq },
        None => Decision::Discard,
    }
}

/// Association against every landmark predicted visible from the particle.
pub fn associate(obs: &StereoObservation, particle: &Particle, calib: &CameraCalib, params: &FilterParams) -> Decision {
    let visible = visible_landmarks(particle, calib, params);
    associate_among(obs, particle, &visible, calib, params)
}

/// Known-correspondence association used for reduction tests.
pub fn associate_oracle(
    truth_id: u64,
    obs: &StereoObservation,
    particle: &Particle,
    calib: &CameraCalib,
    params: &FilterParams,
) -> Decision {
    let Some(index) = particle.landmarks.iter().position(|l| l.truth_id == Some(truth_id)) else {
        return Decision::New;
    };
    let lm = &particle.landmarks[index];
    match innovation(
        lm,
        &obs.measurement(),
        &particle.pose,
        calib,
        &params.observation_noise,
        &params.stereo,
    )
    .and_then(|inn| log_likelihood(&inn.residual, &inn.covariance))
    {
        Ok((_, mahalanobis_sq)) => Decision::Matched { index, mahalanobis_sq },
        Err(_) => Decision::Discard,
    }
}
