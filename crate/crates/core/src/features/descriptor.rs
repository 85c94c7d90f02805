//! 4x4x8 gradient-histogram descriptor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::image::Plane;
use super::scale_space::ScaleSpace;
use super::{FeatureError, Keypoint};

pub const DESCRIPTOR_LEN: usize = 128;
pub const DESCRIPTOR_CLAMP: f64 = 0.2;
const GRID: usize = 4;
const ORI_BINS: usize = 8;
const HIST_WIDTH_FACTOR: f64 = 3.0;

/// Unit-norm, non-negative 128-vector whose components are at most 0.2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    /// Normalizes a raw histogram: scale to unit norm, clamp at 0.2 and
    /// redistribute so the result is again unit norm with no component above
    /// the clamp. Negative inputs are treated as zero.
    pub fn from_raw(raw: &[f64]) -> Result<Descriptor, FeatureError> {
        if raw.len() != DESCRIPTOR_LEN || raw.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::DegenerateDescriptor);
        }
        let x: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(FeatureError::DegenerateDescriptor);
        }
        let x: Vec<f64> = x.iter().map(|v| v / norm).collect();

        let mut order: Vec<usize> = (0..DESCRIPTOR_LEN).collect();
        order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
        let clamp_sq = DESCRIPTOR_CLAMP * DESCRIPTOR_CLAMP;
        // suffix sums of squares in sorted order
        let mut rest = vec![0.0; DESCRIPTOR_LEN + 1];
        for k in (0..DESCRIPTOR_LEN).rev() {
            rest[k] = rest[k + 1] + x[order[k]] * x[order[k]];
        }
        for m in 0..DESCRIPTOR_LEN {
            let budget = 1.0 - clamp_sq * m as f64;
            if budget <= 0.0 || rest[m] == 0.0 {
                break;
            }
            let c = (budget / rest[m]).sqrt();
            if c * x[order[m]] <= DESCRIPTOR_CLAMP {
                let mut values = vec![0.0; DESCRIPTOR_LEN];
                for (k, &i) in order.iter().enumerate() {
                    values[i] = if k < m { DESCRIPTOR_CLAMP } else { c * x[i] };
                }
                return Ok(Descriptor(values));
            }
        }
        // fewer than 25 significant components: no unit vector fits under the clamp
        Err(FeatureError::DegenerateDescriptor)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Descriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn satisfies_invariant(&self) -> bool {
        (self.norm() - 1.0).abs() <= 1e-6 && self.0.iter().all(|&v| (0.0..=DESCRIPTOR_CLAMP + 1e-6).contains(&v))
    }
}

impl TryFrom<Vec<f64>> for Descriptor {
    type Error = FeatureError;

    /// Accepts an already normalized vector, checking the invariant.
    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        if values.len() != DESCRIPTOR_LEN {
            return Err(FeatureError::DegenerateDescriptor);
        }
        let d = Descriptor(values);
        if d.satisfies_invariant() {
            Ok(d)
        } else {
            Err(FeatureError::DegenerateDescriptor)
        }
    }
}

impl From<Descriptor> for Vec<f64> {
    fn from(d: Descriptor) -> Self {
        d.0
    }
}

/// Raw (unnormalized) histogram around `(cx, cy)` in `level` pixels.
pub fn raw_descriptor(level: &Plane, cx: f64, cy: f64, sigma: f64, orientation: f64) -> Result<Vec<f64>, FeatureError> {
    let hist_width = HIST_WIDTH_FACTOR * sigma;
    let half = GRID as f64 / 2.0;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (GRID as f64 + 1.0) * 0.5).round() as i64;
    let x0 = cx.round() as i64;
    let y0 = cy.round() as i64;
    if x0 - radius - 1 < 0
        || y0 - radius - 1 < 0
        || x0 + radius + 1 >= level.width as i64
        || y0 + radius + 1 >= level.height as i64
    {
        return Err(FeatureError::OutOfBounds);
    }
    let (sin_t, cos_t) = orientation.sin_cos();
    let bins_per_rad = ORI_BINS as f64 / (2.0 * PI);
    let mut hist = vec![0.0; GRID * GRID * ORI_BINS];

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = ((x0 + dx) as usize, (y0 + dy) as usize);
            let ox = x as f64 - cx;
            let oy = y as f64 - cy;
            // sample offset in the keypoint frame, in histogram cells
            let xr = (cos_t * ox + sin_t * oy) / hist_width;
            let yr = (-sin_t * ox + cos_t * oy) / hist_width;
            let rbin = yr + half - 0.5;
            let cbin = xr + half - 0.5;
            if rbin <= -1.0 || rbin >= GRID as f64 || cbin <= -1.0 || cbin >= GRID as f64 {
                continue;
            }
            let gx = level.at(x + 1, y) - level.at(x - 1, y);
            let gy = level.at(x, y + 1) - level.at(x, y - 1);
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let weight = (-(xr * xr + yr * yr) / (2.0 * half * half)).exp();
            let angle = (gy.atan2(gx) - orientation).rem_euclid(2.0 * PI);
            let obin = angle * bins_per_rad;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            let v = weight * mag;
            for (ri, wr) in [(r0 as i64, 1.0 - fr), (r0 as i64 + 1, fr)] {
                if !(0..GRID as i64).contains(&ri) {
                    continue;
                }
                for (ci, wc) in [(c0 as i64, 1.0 - fc), (c0 as i64 + 1, fc)] {
                    if !(0..GRID as i64).contains(&ci) {
                        continue;
                    }
                    for (oi, wo) in [(o0 as i64, 1.0 - fo), (o0 as i64 + 1, fo)] {
                        let oi = oi.rem_euclid(ORI_BINS as i64) as usize;
                        let idx = (ri as usize * GRID + ci as usize) * ORI_BINS + oi;
                        hist[idx] += v * wr * wc * wo;
                    }
                }
            }
        }
    }
    Ok(hist)
}

pub fn compute_descriptor(space: &ScaleSpace, kp: &Keypoint) -> Result<Descriptor, FeatureError> {
    let f = space.octave_to_input(kp.octave);
    let level = &space.octaves[kp.octave].gaussians[kp.layer];
    let raw = raw_descriptor(level, kp.u / f, kp.v / f, kp.scale / f, kp.orientation)?;
    Descriptor::from_raw(&raw)
}
