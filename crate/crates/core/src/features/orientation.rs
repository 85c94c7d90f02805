//! Dominant gradient orientation(s) of a keypoint neighbourhood.

use std::f64::consts::PI;

use super::image::Plane;
use super::scale_space::ScaleSpace;
use super::{FeatureError, Keypoint};
use crate::geom::normalize_angle;

pub const ORIENTATION_BINS: usize = 36;
const ORIENTATION_SIGMA_FACTOR: f64 = 1.5;
const ORIENTATION_RADIUS_FACTOR: f64 = 3.0;
const PEAK_RATIO: f64 = 0.8;

/// Raw 36-bin histogram; bin `k` is centred on angle `k * 10°`.
pub fn orientation_histogram(
    level: &Plane,
    cx: f64,
    cy: f64,
    sigma: f64,
) -> Result<[f64; ORIENTATION_BINS], FeatureError> {
    let weight_sigma = ORIENTATION_SIGMA_FACTOR * sigma;
    let radius = (ORIENTATION_RADIUS_FACTOR * weight_sigma).round() as i64;
    let x0 = cx.round() as i64;
    let y0 = cy.round() as i64;
    if x0 - radius - 1 < 0
        || y0 - radius - 1 < 0
        || x0 + radius + 1 >= level.width as i64
        || y0 + radius + 1 >= level.height as i64
    {
        return Err(FeatureError::OutOfBounds);
    }
    let denom = 2.0 * weight_sigma * weight_sigma;
    let mut hist = [0.0; ORIENTATION_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = ((x0 + dx) as usize, (y0 + dy) as usize);
            let gx = level.at(x + 1, y) - level.at(x - 1, y);
            let gy = level.at(x, y + 1) - level.at(x, y - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let rx = x as f64 - cx;
            let ry = y as f64 - cy;
            let w = (-(rx * rx + ry * ry) / denom).exp();
            let bin = (gy.atan2(gx) * ORIENTATION_BINS as f64 / (2.0 * PI)).round() as i64;
            hist[bin.rem_euclid(ORIENTATION_BINS as i64) as usize] += w * mag;
        }
    }
    Ok(hist)
}

/// Circular [1 4 6 4 1]/16 smoothing.
pub fn smooth_histogram(hist: &[f64; ORIENTATION_BINS]) -> [f64; ORIENTATION_BINS] {
    let n = ORIENTATION_BINS;
    let mut out = [0.0; ORIENTATION_BINS];
    for (i, o) in out.iter_mut().enumerate() {
        let at = |k: isize| hist[(i as isize + k).rem_euclid(n as isize) as usize];
        *o = (at(-2) + at(2)) / 16.0 + (at(-1) + at(1)) * 4.0 / 16.0 + at(0) * 6.0 / 16.0;
    }
    out
}

/// Orientations of local peaks reaching 80% of the global maximum,
/// refined by a parabola through the peak and its neighbours.
pub fn orientation_peaks(hist: &[f64; ORIENTATION_BINS]) -> Vec<f64> {
    let n = ORIENTATION_BINS;
    let max = hist.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 0..n {
        let l = hist[(i + n - 1) % n];
        let c = hist[i];
        let r = hist[(i + 1) % n];
        if c > l && c > r && c >= PEAK_RATIO * max {
            let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
            let bin = i as f64 + offset;
            peaks.push(normalize_angle(bin * 2.0 * PI / n as f64));
        }
    }
    peaks
}

/// One keypoint per dominant orientation at the keypoint's Gaussian level.
pub fn assign_orientation(space: &ScaleSpace, kp: &Keypoint) -> Result<Vec<Keypoint>, FeatureError> {
    let oct = &space.octaves[kp.octave];
    let f = space.octave_to_input(kp.octave);
    let level = &oct.gaussians[kp.layer];
    let sigma = kp.scale / f;
    let hist = orientation_histogram(level, kp.u / f, kp.v / f, sigma)?;
    Ok(orientation_peaks(&smooth_histogram(&hist))
        .into_iter()
        .map(|orientation| Keypoint { orientation, ..*kp })
        .collect())
}
