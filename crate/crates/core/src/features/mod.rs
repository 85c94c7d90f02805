//! Scale-invariant interest points: DoG detection, orientation assignment,
//! 128-d gradient-histogram descriptors and ratio-test matching.

pub mod descriptor;
pub mod detect;
pub mod image;
pub mod matching;
pub mod orientation;
pub mod scale_space;

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use descriptor::{compute_descriptor, Descriptor, DESCRIPTOR_LEN};
pub use detect::detect_keypoints;
pub use image::{gaussian_blur, read_pgm, write_pgm, GrayImage};
pub use matching::{match_descriptors, MatchPair};
pub use orientation::assign_orientation;
pub use scale_space::{build_scale_space, ScaleSpace};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("image too small: {width}x{height} (minimum side is 16)")]
    ImageTooSmall { width: usize, height: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("keypoint window leaves the image")]
    OutOfBounds,
    #[error("descriptor has too little support to normalize")]
    DegenerateDescriptor,
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("pgm: {0}")]
    Pgm(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiftParams {
    pub scales_per_octave: usize,
    pub sigma0: f64,
    /// Blur already present in the input image.
    pub assumed_blur: f64,
    pub upsample: bool,
    /// Divided by `scales_per_octave` before use.
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub ratio_threshold: f64,
    pub max_octaves: Option<usize>,
}

impl Default for SiftParams {
    fn default() -> Self {
        SiftParams {
            scales_per_octave: 3,
            sigma0: 1.6,
            assumed_blur: 0.5,
            upsample: true,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            ratio_threshold: 0.8,
            max_octaves: None,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<(), FeatureError> {
        let bad = |m: &str| Err(FeatureError::InvalidParams(m.to_string()));
        if self.scales_per_octave == 0 {
            return bad("scales_per_octave must be >= 1");
        }
        if !(self.sigma0 > 0.0) || self.assumed_blur < 0.0 {
            return bad("sigma0 must be positive and assumed_blur non-negative");
        }
        if !(self.edge_ratio > 0.0) || self.contrast_threshold < 0.0 {
            return bad("edge_ratio must be positive and contrast_threshold non-negative");
        }
        if !(self.ratio_threshold > 0.0 && self.ratio_threshold <= 1.0) {
            return bad("ratio_threshold must be in (0, 1]");
        }
        Ok(())
    }

    pub fn effective_contrast_threshold(&self) -> f64 {
        self.contrast_threshold / self.scales_per_octave as f64
    }

    /// Keypoints need `trace² / det < (r + 1)² / r`.
    pub fn edge_limit(&self) -> f64 {
        let r = self.edge_ratio;
        (r + 1.0) * (r + 1.0) / r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    /// Column in input-image pixels.
    pub u: f64,
    /// Row in input-image pixels.
    pub v: f64,
    /// Detection sigma in input-image pixels.
    pub scale: f64,
    pub orientation: f64,
    /// Interpolated DoG value at the extremum.
    pub response: f64,
    pub octave: usize,
    /// DoG layer (and matching Gaussian level) inside the octave.
    pub layer: usize,
}

impl Keypoint {
    /// Octave, then row, then column, then scale, then orientation.
    pub fn canonical_cmp(a: &Keypoint, b: &Keypoint) -> Ordering {
        a.octave
            .cmp(&b.octave)
            .then(a.v.total_cmp(&b.v))
            .then(a.u.total_cmp(&b.u))
            .then(a.scale.total_cmp(&b.scale))
            .then(a.orientation.total_cmp(&b.orientation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

/// Full pipeline: scale space, detection, orientation, description.
/// Keypoints whose windows leave the image are dropped.
pub fn extract_features(img: &GrayImage, params: &SiftParams) -> Result<Vec<Feature>, FeatureError> {
    let space = build_scale_space(img, params)?;
    Ok(describe_keypoints(&space, &detect_keypoints(&space)))
}

pub fn describe_keypoints(space: &ScaleSpace, keypoints: &[Keypoint]) -> Vec<Feature> {
    let per_kp: Vec<Vec<Feature>> = keypoints
        .par_iter()
        .map(|kp| {
            let Ok(oriented) = assign_orientation(space, kp) else {
                return Vec::new();
            };
            oriented
                .into_iter()
                .filter_map(|k| {
                    compute_descriptor(space, &k).ok().map(|descriptor| Feature {
                        keypoint: k,
                        descriptor,
                    })
                })
                .collect()
        })
        .collect();
    let mut features: Vec<Feature> = per_kp.into_iter().flatten().collect();
    features.sort_by(|a, b| Keypoint::canonical_cmp(&a.keypoint, &b.keypoint));
    features
}
