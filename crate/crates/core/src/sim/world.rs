//! Ground-truth landmark fields.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::features::descriptor::DESCRIPTOR_LEN;
use crate::features::Descriptor;
use crate::geom::{Point3, RngStream};

/// Minimum pairwise L2 distance between ground-truth descriptors.
pub const MIN_DESCRIPTOR_SEPARATION: f64 = 0.5;
/// Rejected draws tolerated before giving up.
pub const MAX_REJECTIONS: usize = 10_000;

const WORLD_STREAM: u64 = 0x5749_4f52_4c44;

/// Axis-aligned floor rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            x_min: 0.0,
            x_max: 12.0,
            y_min: 0.0,
            y_max: 8.0,
        }
    }
}

impl Bounds {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    pub fn is_valid(&self) -> bool {
        [self.x_min, self.x_max, self.y_min, self.y_max]
            .iter()
            .all(|v| v.is_finite())
            && self.x_max > self.x_min
            && self.y_max > self.y_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldLandmark {
    pub id: u64,
    pub position: Point3,
    pub descriptor: Descriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub landmarks: Vec<WorldLandmark>,
    pub bounds: Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_landmarks: usize,
    pub bounds: Bounds,
    /// Landmark heights above the floor, meters.
    pub height_range: [f64; 2],
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_landmarks: 150,
            bounds: Bounds::default(),
            height_range: [0.2, 2.0],
        }
    }
}

fn random_descriptor(rng: &mut RngStream) -> Descriptor {
    loop {
        let raw: Vec<f64> = (0..DESCRIPTOR_LEN).map(|_| rng.standard_normal().abs()).collect();
        if let Ok(d) = Descriptor::from_raw(&raw) {
            return d;
        }
    }
}

/// Uniformly placed landmarks with well-separated random descriptors.
/// Ids are `0..n`.
pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<WorldModel, SimError> {
    let WorldConfig {
        n_landmarks,
        bounds,
        height_range: [h0, h1],
    } = *config;
    if n_landmarks == 0 {
        return Err(SimError::InvalidConfig("n_landmarks must be >= 1".into()));
    }
    if !bounds.is_valid() || !(h0.is_finite() && h1.is_finite() && h1 >= h0) {
        return Err(SimError::InvalidConfig("invalid bounds or height range".into()));
    }
    let mut rng = RngStream::derived(seed, &[WORLD_STREAM]);
    let mut landmarks: Vec<WorldLandmark> = Vec::with_capacity(n_landmarks);
    let mut rejections = 0;
    for id in 0..n_landmarks as u64 {
        let position = Point3::new(
            bounds.x_min + rng.uniform() * bounds.width(),
            bounds.y_min + rng.uniform() * bounds.height(),
            h0 + rng.uniform() * (h1 - h0),
        );
        let descriptor = loop {
            let d = random_descriptor(&mut rng);
            if landmarks
                .iter()
                .all(|l| l.descriptor.distance(&d) >= MIN_DESCRIPTOR_SEPARATION)
            {
                break d;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(SimError::SeparationUnsatisfiable {
                    placed: landmarks.len(),
                    requested: n_landmarks,
                });
            }
        };
        landmarks.push(WorldLandmark {
            id,
            position,
            descriptor,
        });
    }
    Ok(WorldModel { landmarks, bounds })
}
