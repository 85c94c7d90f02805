//! Per-landmark extended Kalman filter on the 3D position.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use super::{FilterError, LandmarkEstimate, Particle};
use crate::geom::{symmetrize, Pose2};
use crate::stereo::{
    jacobian_at, project, triangulate_world, CameraCalib, ObservationNoise, StereoObservation, StereoParams,
};

/// Linearized measurement prediction for one landmark.
#[derive(Debug, Clone, Copy)]
pub struct Innovation {
    pub residual: Vector3<f64>,
    pub jacobian: Matrix3<f64>,
    pub covariance: Matrix3<f64>,
}

/// `z - h(mean)`, `H` and `S = H P Hᵀ + R`. Fails only when the landmark is
/// not in front of the camera.
pub fn innovation(
    lm: &LandmarkEstimate,
    z: &Vector3<f64>,
    pose: &Pose2,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    stereo: &StereoParams,
) -> Result<Innovation, FilterError> {
    let proj = project(&lm.state.mean, pose, calib, stereo);
    if !(proj.camera_point.z > stereo.min_depth_m) {
        return Err(crate::stereo::StereoError::NotVisible.into());
    }
    let h = jacobian_at(&proj.camera_point, pose, calib);
    let s = symmetrize(&(h * lm.state.cov * h.transpose() + noise.covariance()));
    Ok(Innovation {
        residual: z - proj.measurement,
        jacobian: h,
        covariance: s,
    })
}

/// `log N(residual; 0, S)` and the squared Mahalanobis distance.
pub fn log_likelihood(residual: &Vector3<f64>, s: &Matrix3<f64>) -> Result<(f64, f64), FilterError> {
    let chol = s.cholesky().ok_or(FilterError::NotPositiveDefinite)?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(residual)
        .ok_or(FilterError::NotPositiveDefinite)?;
    let m = y.norm_squared();
    let log_det = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok((-0.5 * (m + log_det + 3.0 * (2.0 * PI).ln()), m))
}

/// EKF update in place; returns the observation log-likelihood.
pub fn update_landmark_in_place(
    lm: &mut LandmarkEstimate,
    obs: &StereoObservation,
    pose: &Pose2,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    stereo: &StereoParams,
) -> Result<f64, FilterError> {
    let inn = innovation(lm, &obs.measurement(), pose, calib, noise, stereo)?;
    let (loglik, _) = log_likelihood(&inn.residual, &inn.covariance)?;
    let s_inv = inn
        .covariance
        .cholesky()
        .ok_or(FilterError::NotPositiveDefinite)?
        .inverse();
    let p = lm.state.cov;
    let k = p * inn.jacobian.transpose() * s_inv;
    let ikh = Matrix3::identity() - k * inn.jacobian;
    // Joseph form keeps P symmetric positive semi-definite
    let p_new = ikh * p * ikh.transpose() + k * noise.covariance() * k.transpose();
    lm.state.mean += k * inn.residual;
    lm.state.cov = symmetrize(&p_new);
    lm.hits += 1;
    Ok(loglik)
}

/// Functional form of [`update_landmark_in_place`].
pub fn update_landmark(
    lm: &LandmarkEstimate,
    obs: &StereoObservation,
    pose: &Pose2,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    stereo: &StereoParams,
) -> Result<(LandmarkEstimate, f64), FilterError> {
    let mut out = lm.clone();
    let ll = update_landmark_in_place(&mut out, obs, pose, calib, noise, stereo)?;
    Ok((out, ll))
}

/// Initializes a landmark from a single observation; returns its id.
pub fn add_landmark(
    particle: &mut Particle,
    obs: &StereoObservation,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    stereo: &StereoParams,
) -> Result<u64, FilterError> {
    let state = triangulate_world(obs, &particle.pose, calib, noise, stereo)?;
    let id = particle.next_landmark_id;
    particle.next_landmark_id += 1;
    particle.landmarks.push(LandmarkEstimate {
        id,
        state,
        descriptor: Arc::new(obs.descriptor.clone()),
        hits: 1,
        misses: 0,
        truth_id: None,
    });
    Ok(id)
}
