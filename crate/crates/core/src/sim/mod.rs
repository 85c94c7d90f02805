//! Synthetic worlds, trajectories, sensor data and the dataset format.

pub mod dataset;
pub mod observe;
pub mod render;
pub mod trajectory;
pub mod world;

use thiserror::Error;

pub use dataset::{
    generate_dataset, read_dataset, read_filter_inputs, simulate_to_dir, write_dataset, Dataset, DatasetFrame,
    DatasetManifest, FilterFrame, SimConfig,
};
pub use observe::{observe, SensorModel, TaggedObservation};
pub use render::{render_frame_images, RenderConfig};
pub use trajectory::{generate_trajectory, Pattern, TrajectorySpec};
pub use world::{generate_world, Bounds, WorldConfig, WorldLandmark, WorldModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("could not place landmark {placed} of {requested} with separated descriptors")]
    SeparationUnsatisfiable { placed: usize, requested: usize },
    #[error("trajectory leaves the bounds at pose {index} ({x:.3}, {y:.3})")]
    OutOfBounds { index: usize, x: f64, y: f64 },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{file} line {line}: {message}")]
    SchemaViolation { file: String, line: usize, message: String },
    #[error("{file}: checksum mismatch")]
    ChecksumMismatch { file: String },
}
