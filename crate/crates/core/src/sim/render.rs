//! Synthetic rectified stereo images: one Gaussian blob per visible landmark.

use serde::{Deserialize, Serialize};

use super::world::WorldModel;
use crate::features::GrayImage;
use crate::geom::Pose2;
use crate::stereo::{project, CameraCalib, StereoParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Physical blob radius; the image-space sigma is `fx * size / Z`.
    pub blob_size_m: f64,
    /// Sigma limits in pixels. The lower limit keeps blobs well sampled.
    pub min_sigma_px: f64,
    pub max_sigma_px: f64,
    pub background: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            blob_size_m: 0.02,
            min_sigma_px: 1.2,
            max_sigma_px: 8.0,
            background: 0.05,
        }
    }
}

/// Fixed blob amplitude for a landmark id, in `[0.45, 0.95)`.
pub fn landmark_intensity(id: u64) -> f64 {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    0.45 + 0.5 * ((id as f64 + 1.0) * GOLDEN).fract()
}

/// Image-space sigma of a blob at depth `z`.
pub fn blob_sigma(z: f64, calib: &CameraCalib, config: &RenderConfig) -> f64 {
    (calib.fx * config.blob_size_m / z).clamp(config.min_sigma_px, config.max_sigma_px)
}

struct Blob {
    x: f64,
    y: f64,
    sigma: f64,
    amplitude: f64,
}

fn rasterize(blobs: &[Blob], calib: &CameraCalib, config: &RenderConfig) -> GrayImage {
    let (w, h) = (calib.width, calib.height);
    let mut data = vec![config.background; w * h];
    for b in blobs {
        let r = (4.0 * b.sigma).ceil();
        let x0 = (b.x - r).floor().max(0.0) as usize;
        let x1 = ((b.x + r).ceil() as usize).min(w - 1);
        let y0 = (b.y - r).floor().max(0.0) as usize;
        let y1 = ((b.y + r).ceil() as usize).min(h - 1);
        let inv = 1.0 / (2.0 * b.sigma * b.sigma);
        for y in y0..=y1 {
            let dy = y as f64 - b.y;
            for x in x0..=x1 {
                let dx = x as f64 - b.x;
                data[y * w + x] += b.amplitude * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    GrayImage::new(w, h, data).expect("calibrated image size is valid")
}

/// Left and right images seen from `pose`.
pub fn render_frame_images(
    pose: &Pose2,
    world: &WorldModel,
    calib: &CameraCalib,
    stereo: &StereoParams,
    config: &RenderConfig,
) -> (GrayImage, GrayImage) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for lm in &world.landmarks {
        let proj = project(&lm.position, pose, calib, stereo);
        if !proj.visible {
            continue;
        }
        let m = proj.measurement;
        let sigma = blob_sigma(proj.camera_point.z, calib, config);
        let amplitude = landmark_intensity(lm.id);
        left.push(Blob {
            x: m.x,
            y: m.y,
            sigma,
            amplitude,
        });
        right.push(Blob {
            x: m.x - m.z,
            y: m.y,
            sigma,
            amplitude,
        });
    }
    (rasterize(&left, calib, config), rasterize(&right, calib, config))
}
