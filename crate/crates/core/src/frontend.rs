//! Image front end: features on both images of a rectified pair, stereo
//! pairing, and removal of duplicate measurements.

use crate::features::{extract_features, FeatureError, GrayImage, SiftParams};
use crate::stereo::{stereo_pair, CameraCalib, StereoObservation, StereoParams};

/// Observations closer than this in `(u, v)` are treated as one feature.
pub const DUPLICATE_RADIUS_PX: f64 = 1.5;

/// Keeps the first of any group of observations within
/// [`DUPLICATE_RADIUS_PX`] of each other (one keypoint may carry several
/// orientations, each producing its own descriptor).
pub fn dedupe_observations(observations: Vec<StereoObservation>) -> Vec<StereoObservation> {
    let r2 = DUPLICATE_RADIUS_PX * DUPLICATE_RADIUS_PX;
    let mut kept: Vec<StereoObservation> = Vec::with_capacity(observations.len());
    for o in observations {
        if kept.iter().all(|k| (k.u - o.u).powi(2) + (k.v - o.v).powi(2) > r2) {
            kept.push(o);
        }
    }
    kept
}

pub fn image_observations(
    left: &GrayImage,
    right: &GrayImage,
    calib: &CameraCalib,
    sift: &SiftParams,
    stereo: &StereoParams,
) -> Result<Vec<StereoObservation>, FeatureError> {
    let fl = extract_features(left, sift)?;
    let fr = extract_features(right, sift)?;
    Ok(dedupe_observations(stereo_pair(&fl, &fr, calib, stereo)))
}
