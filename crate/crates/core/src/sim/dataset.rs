//! Dataset generation and the on-disk directory format.
//!
//! ```text
//! manifest.json        generator config, start pose, counts, sha256 of every other file
//! frames.csv           frame_index,dx,dy,dtheta
//! observations.csv     frame_index,u,v,d,desc_0..desc_127
//! oracle.csv           frame_index,observation,landmark_id
//! gt_trajectory.csv    frame,x,y,theta
//! gt_landmarks.csv     id,x,y,z,desc_0..desc_127
//! img/left_NNNNNN.pgm  optional rendered pair
//! img/right_NNNNNN.pgm
//! ```
//!
//! The filter-side loader ([`read_filter_inputs`]) reads only the manifest,
//! `frames.csv` and `observations.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::observe::{observe, SensorModel};
use super::render::{render_frame_images, RenderConfig};
use super::trajectory::{generate_trajectory, TrajectorySpec};
use super::world::{generate_world, WorldConfig, WorldLandmark, WorldModel};
use super::SimError;
use crate::fastslam::MotionNoise;
use crate::features::image::{encode_pgm, parse_pgm};
use crate::features::{Descriptor, GrayImage, DESCRIPTOR_LEN};
use crate::geom::{OdometryDelta, Point3, Pose2, RngStream};
use crate::stereo::{CameraCalib, StereoObservation, StereoParams};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAMES_FILE: &str = "frames.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const ORACLE_FILE: &str = "oracle.csv";
pub const GT_TRAJECTORY_FILE: &str = "gt_trajectory.csv";
pub const GT_LANDMARKS_FILE: &str = "gt_landmarks.csv";

const ODOM_STREAM: u64 = 0x4f44_4f4d;
const OBS_STREAM: u64 = 0x4f42_5356;
const RENDER_CHUNK: usize = 16;

pub fn left_image_name(frame: usize) -> String {
    format!("img/left_{frame:06}.pgm")
}

pub fn right_image_name(frame: usize) -> String {
    format!("img/right_{frame:06}.pgm")
}

/// Everything a dataset is generated from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub world: WorldConfig,
    pub trajectory: TrajectorySpec,
    pub calibration: CameraCalib,
    pub stereo: StereoParams,
    pub sensor: SensorModel,
    /// Noise applied to the stored odometry. The default equals the filter's
    /// default motion model.
    pub odometry_noise: MotionNoise,
    /// Rendered image pairs are written when present.
    pub render: Option<RenderConfig>,
}

impl SimConfig {
    /// Odometry noisier than the filter assumes by `scale`.
    pub fn mismatched(mut self, scale: f64) -> Self {
        for a in self
            .odometry_noise
            .translation
            .iter_mut()
            .chain(self.odometry_noise.rotation.iter_mut())
        {
            *a *= scale;
        }
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.calibration
            .validate()
            .map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        let s = &self.sensor;
        if !(0.0..=1.0).contains(&s.detection_prob) {
            return Err(SimError::InvalidConfig("detection_prob must be in [0, 1]".into()));
        }
        let n = &s.noise;
        if [n.sigma_u, n.sigma_v, n.sigma_d, s.sigma_desc]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(SimError::InvalidConfig("noise levels must be finite and >= 0".into()));
        }
        let m = &self.odometry_noise;
        if m.translation.iter().chain(&m.rotation).any(|a| !(*a >= 0.0)) {
            return Err(SimError::InvalidConfig("odometry noise must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub config: SimConfig,
    /// Shared start pose of ground truth and every estimate.
    pub start_pose: Pose2,
    pub n_frames: usize,
    pub n_observations: usize,
    /// Hex sha256 of every other file, keyed by relative path.
    pub checksums: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn has_images(&self) -> bool {
        self.config.render.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFrame {
    pub frame_index: usize,
    pub true_pose: Pose2,
    /// Noisy motion since the previous frame; zero for frame 0.
    pub odom: OdometryDelta,
    pub observations: Vec<StereoObservation>,
    /// Producing landmark of each observation.
    pub truth_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub world: WorldModel,
    pub frames: Vec<DatasetFrame>,
}

impl Dataset {
    pub fn ground_truth(&self) -> Vec<Pose2> {
        self.frames.iter().map(|f| f.true_pose).collect()
    }
}

/// Generates a dataset in memory. Pure function of `config`.
pub fn generate_dataset(config: &SimConfig) -> Result<Dataset, SimError> {
    config.validate()?;
    let world = generate_world(config.seed, &config.world)?;
    let poses = generate_trajectory(&config.trajectory, &world.bounds)?;
    let frames: Vec<DatasetFrame> = (0..poses.len())
        .into_par_iter()
        .map(|k| {
            let odom = if k == 0 {
                OdometryDelta::zero()
            } else {
                let mut rng = RngStream::derived(config.seed, &[ODOM_STREAM, k as u64]);
                config
                    .odometry_noise
                    .sample(&poses[k - 1].relative_delta(&poses[k]), &mut rng)
            };
            let mut rng = RngStream::derived(config.seed, &[OBS_STREAM, k as u64]);
            let tagged = observe(
                &poses[k],
                &world,
                &config.calibration,
                &config.stereo,
                &config.sensor,
                &mut rng,
            );
            let (observations, truth_ids) = tagged.into_iter().map(|t| (t.observation, t.landmark_id)).unzip();
            DatasetFrame {
                frame_index: k,
                true_pose: poses[k],
                odom,
                observations,
                truth_ids,
            }
        })
        .collect();
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        start_pose: poses[0],
        n_frames: frames.len(),
        n_observations: frames.iter().map(|f| f.observations.len()).sum(),
        checksums: BTreeMap::new(),
    };
    Ok(Dataset {
        manifest,
        world,
        frames,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn descriptor_header(prefix: &[&str]) -> Vec<String> {
    prefix
        .iter()
        .map(|s| s.to_string())
        .chain((0..DESCRIPTOR_LEN).map(|i| format!("desc_{i}")))
        .collect()
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn strs(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn with_descriptor(mut row: Vec<String>, d: &Descriptor) -> Vec<String> {
    row.extend(d.values().iter().map(|v| v.to_string()));
    row
}

/// Writes `dataset` under `dir` (created if needed) and returns the manifest
/// with checksums filled in.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetManifest, SimError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();

    files.push((
        FRAMES_FILE.into(),
        csv_bytes(
            &strs(&["frame_index", "dx", "dy", "dtheta"]),
            dataset.frames.iter().map(|f| {
                vec![
                    f.frame_index.to_string(),
                    f.odom.dx.to_string(),
                    f.odom.dy.to_string(),
                    f.odom.dtheta.to_string(),
                ]
            }),
        ),
    ));
    files.push((
        OBSERVATIONS_FILE.into(),
        csv_bytes(
            &descriptor_header(&["frame_index", "u", "v", "d"]),
            dataset.frames.iter().flat_map(|f| {
                f.observations.iter().map(move |o| {
                    with_descriptor(
                        vec![
                            f.frame_index.to_string(),
                            o.u.to_string(),
                            o.v.to_string(),
                            o.d.to_string(),
                        ],
                        &o.descriptor,
                    )
                })
            }),
        ),
    ));
    files.push((
        ORACLE_FILE.into(),
        csv_bytes(
            &strs(&["frame_index", "observation", "landmark_id"]),
            dataset.frames.iter().flat_map(|f| {
                f.truth_ids
                    .iter()
                    .enumerate()
                    .map(move |(i, id)| vec![f.frame_index.to_string(), i.to_string(), id.to_string()])
            }),
        ),
    ));
    files.push((
        GT_TRAJECTORY_FILE.into(),
        csv_bytes(
            &strs(&["frame", "x", "y", "theta"]),
            dataset.frames.iter().map(|f| {
                vec![
                    f.frame_index.to_string(),
                    f.true_pose.x.to_string(),
                    f.true_pose.y.to_string(),
                    f.true_pose.theta.to_string(),
                ]
            }),
        ),
    ));
    files.push((
        GT_LANDMARKS_FILE.into(),
        csv_bytes(
            &descriptor_header(&["id", "x", "y", "z"]),
            dataset.world.landmarks.iter().map(|l| {
                with_descriptor(
                    vec![
                        l.id.to_string(),
                        l.position.x.to_string(),
                        l.position.y.to_string(),
                        l.position.z.to_string(),
                    ],
                    &l.descriptor,
                )
            }),
        ),
    ));

    let mut checksums = BTreeMap::new();
    for (name, bytes) in &files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        checksums.insert(name.clone(), sha256_hex(bytes));
    }

    if let Some(render) = &dataset.manifest.config.render {
        let img_dir = dir.join("img");
        fs::create_dir_all(&img_dir).map_err(|e| io_err(&img_dir, e))?;
        let cfg = &dataset.manifest.config;
        for chunk in dataset.frames.chunks(RENDER_CHUNK) {
            let encoded: Vec<(usize, Vec<u8>, Vec<u8>)> = chunk
                .par_iter()
                .map(|f| {
                    let (l, r) =
                        render_frame_images(&f.true_pose, &dataset.world, &cfg.calibration, &cfg.stereo, render);
                    (f.frame_index, encode_pgm(&l), encode_pgm(&r))
                })
                .collect();
            for (k, l, r) in encoded {
                for (name, bytes) in [(left_image_name(k), l), (right_image_name(k), r)] {
                    let path = dir.join(&name);
                    fs::write(&path, &bytes).map_err(|e| io_err(&path, e))?;
                    checksums.insert(name, sha256_hex(&bytes));
                }
            }
        }
    }

    let manifest = DatasetManifest {
        checksums,
        ..dataset.manifest.clone()
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// Generates and writes in one go.
pub fn simulate_to_dir(config: &SimConfig, dir: &Path) -> Result<DatasetManifest, SimError> {
    write_dataset(&generate_dataset(config)?, dir)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, SimError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| SimError::SchemaViolation {
        file: MANIFEST_FILE.into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(SimError::SchemaViolation {
            file: MANIFEST_FILE.into(),
            line: 1,
            message: format!("unsupported format_version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

/// One CSV file held in memory so it can be checksummed after parsing.
struct CsvFile {
    name: String,
    bytes: Vec<u8>,
}

impl CsvFile {
    fn open(dir: &Path, name: &str) -> Result<CsvFile, SimError> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        Ok(CsvFile {
            name: name.into(),
            bytes,
        })
    }

    fn violation(&self, line: u64, message: impl Into<String>) -> SimError {
        SimError::SchemaViolation {
            file: self.name.clone(),
            line: line as usize,
            message: message.into(),
        }
    }

    /// Data rows as `(line number, fields)` after validating the header and
    /// the column count of every row.
    fn rows(&self, header: &[String]) -> Result<Vec<(u64, Vec<String>)>, SimError> {
        if self.bytes.is_empty() {
            return Err(self.violation(1, "missing header row"));
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(self.bytes.as_slice());
        let mut out = Vec::new();
        let mut last_line = 1;
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                self.violation(line, e.to_string())
            })?;
            let line = rec.position().map(|p| p.line()).unwrap_or(i as u64 + 1);
            last_line = line;
            let fields: Vec<String> = rec.iter().map(str::to_string).collect();
            if i == 0 {
                if fields != header {
                    return Err(self.violation(line, "unexpected header row"));
                }
                continue;
            }
            if fields.len() != header.len() {
                return Err(self.violation(
                    line,
                    format!("expected {} columns, found {}", header.len(), fields.len()),
                ));
            }
            out.push((line, fields));
        }
        if self.bytes.last() != Some(&b'\n') {
            return Err(self.violation(last_line, "row is not newline-terminated (truncated file?)"));
        }
        Ok(out)
    }

    fn f64_at(&self, line: u64, fields: &[String], i: usize) -> Result<f64, SimError> {
        let v: f64 = fields[i]
            .parse()
            .map_err(|_| self.violation(line, format!("column {i}: not a number: {:?}", fields[i])))?;
        if !v.is_finite() {
            return Err(self.violation(line, format!("column {i}: non-finite value")));
        }
        Ok(v)
    }

    fn u64_at(&self, line: u64, fields: &[String], i: usize) -> Result<u64, SimError> {
        fields[i]
            .parse()
            .map_err(|_| self.violation(line, format!("column {i}: not an integer: {:?}", fields[i])))
    }

    fn descriptor_at(&self, line: u64, fields: &[String], start: usize) -> Result<Descriptor, SimError> {
        let values = (start..start + DESCRIPTOR_LEN)
            .map(|i| self.f64_at(line, fields, i))
            .collect::<Result<Vec<_>, _>>()?;
        Descriptor::try_from(values)
            .map_err(|_| self.violation(line, "descriptor violates the unit-norm/clamp invariant"))
    }

    fn verify(&self, manifest: &DatasetManifest) -> Result<(), SimError> {
        verify_checksum(manifest, &self.name, &self.bytes)
    }

    fn last_line(&self) -> u64 {
        self.bytes.iter().filter(|&&b| b == b'\n').count() as u64
    }
}

fn verify_checksum(manifest: &DatasetManifest, name: &str, bytes: &[u8]) -> Result<(), SimError> {
    match manifest.checksums.get(name) {
        Some(expected) if *expected == sha256_hex(bytes) => Ok(()),
        _ => Err(SimError::ChecksumMismatch { file: name.into() }),
    }
}

fn read_frames(dir: &Path, manifest: &DatasetManifest) -> Result<Vec<OdometryDelta>, SimError> {
    let file = CsvFile::open(dir, FRAMES_FILE)?;
    let rows = file.rows(&strs(&["frame_index", "dx", "dy", "dtheta"]))?;
    let mut odom = Vec::with_capacity(rows.len());
    for (k, (line, f)) in rows.iter().enumerate() {
        if file.u64_at(*line, f, 0)? != k as u64 {
            return Err(file.violation(*line, format!("expected frame_index {k}")));
        }
        odom.push(OdometryDelta {
            dx: file.f64_at(*line, f, 1)?,
            dy: file.f64_at(*line, f, 2)?,
            dtheta: file.f64_at(*line, f, 3)?,
        });
    }
    if odom.len() != manifest.n_frames {
        return Err(file.violation(
            file.last_line(),
            format!("expected {} frames, found {}", manifest.n_frames, odom.len()),
        ));
    }
    file.verify(manifest)?;
    Ok(odom)
}

fn read_observations(dir: &Path, manifest: &DatasetManifest) -> Result<Vec<Vec<StereoObservation>>, SimError> {
    let file = CsvFile::open(dir, OBSERVATIONS_FILE)?;
    let rows = file.rows(&descriptor_header(&["frame_index", "u", "v", "d"]))?;
    let mut per_frame = vec![Vec::new(); manifest.n_frames];
    let mut prev = 0;
    for (line, f) in &rows {
        let k = file.u64_at(*line, f, 0)? as usize;
        if k >= manifest.n_frames || k < prev {
            return Err(file.violation(*line, format!("frame_index {k} out of order or range")));
        }
        prev = k;
        per_frame[k].push(StereoObservation {
            u: file.f64_at(*line, f, 1)?,
            v: file.f64_at(*line, f, 2)?,
            d: file.f64_at(*line, f, 3)?,
            descriptor: file.descriptor_at(*line, f, 4)?,
        });
    }
    if rows.len() != manifest.n_observations {
        return Err(file.violation(
            file.last_line(),
            format!(
                "expected {} observations, found {}",
                manifest.n_observations,
                rows.len()
            ),
        ));
    }
    file.verify(manifest)?;
    Ok(per_frame)
}

/// Odometry and observations of one frame, as seen by the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterFrame {
    pub frame_index: usize,
    pub odom: OdometryDelta,
    pub observations: Vec<StereoObservation>,
}

/// Filter-visible part of a dataset. Never opens the oracle or ground truth.
pub fn read_filter_inputs(dir: &Path) -> Result<(DatasetManifest, Vec<FilterFrame>), SimError> {
    let manifest = read_manifest(dir)?;
    let odom = read_frames(dir, &manifest)?;
    let observations = read_observations(dir, &manifest)?;
    let frames = odom
        .into_iter()
        .zip(observations)
        .enumerate()
        .map(|(frame_index, (odom, observations))| FilterFrame {
            frame_index,
            odom,
            observations,
        })
        .collect();
    Ok((manifest, frames))
}

/// Landmark id of each observation, per frame.
pub fn read_oracle(dir: &Path, manifest: &DatasetManifest, counts: &[usize]) -> Result<Vec<Vec<u64>>, SimError> {
    let file = CsvFile::open(dir, ORACLE_FILE)?;
    let rows = file.rows(&strs(&["frame_index", "observation", "landmark_id"]))?;
    let mut ids: Vec<Vec<u64>> = vec![Vec::new(); counts.len()];
    for (line, f) in &rows {
        let k = file.u64_at(*line, f, 0)? as usize;
        let i = file.u64_at(*line, f, 1)? as usize;
        if k >= counts.len() || i != ids[k].len() || i >= counts[k] {
            return Err(file.violation(*line, "row does not match the observation table"));
        }
        ids[k].push(file.u64_at(*line, f, 2)?);
    }
    if let Some(k) = (0..counts.len()).find(|&k| ids[k].len() != counts[k]) {
        return Err(file.violation(file.last_line(), format!("frame {k}: oracle rows missing")));
    }
    file.verify(manifest)?;
    Ok(ids)
}

pub fn read_gt_trajectory(dir: &Path, manifest: &DatasetManifest) -> Result<Vec<Pose2>, SimError> {
    let file = CsvFile::open(dir, GT_TRAJECTORY_FILE)?;
    let rows = file.rows(&strs(&["frame", "x", "y", "theta"]))?;
    let mut poses = Vec::with_capacity(rows.len());
    for (k, (line, f)) in rows.iter().enumerate() {
        if file.u64_at(*line, f, 0)? != k as u64 {
            return Err(file.violation(*line, format!("expected frame {k}")));
        }
        poses.push(Pose2 {
            x: file.f64_at(*line, f, 1)?,
            y: file.f64_at(*line, f, 2)?,
            theta: file.f64_at(*line, f, 3)?,
        });
    }
    if poses.len() != manifest.n_frames {
        return Err(file.violation(
            file.last_line(),
            format!("expected {} poses, found {}", manifest.n_frames, poses.len()),
        ));
    }
    file.verify(manifest)?;
    Ok(poses)
}

pub fn read_gt_landmarks(dir: &Path, manifest: &DatasetManifest) -> Result<WorldModel, SimError> {
    let file = CsvFile::open(dir, GT_LANDMARKS_FILE)?;
    let rows = file.rows(&descriptor_header(&["id", "x", "y", "z"]))?;
    let mut landmarks = Vec::with_capacity(rows.len());
    for (line, f) in &rows {
        landmarks.push(WorldLandmark {
            id: file.u64_at(*line, f, 0)?,
            position: Point3::new(
                file.f64_at(*line, f, 1)?,
                file.f64_at(*line, f, 2)?,
                file.f64_at(*line, f, 3)?,
            ),
            descriptor: file.descriptor_at(*line, f, 4)?,
        });
    }
    file.verify(manifest)?;
    Ok(WorldModel {
        landmarks,
        bounds: manifest.config.world.bounds,
    })
}

/// Full dataset including ground truth and the oracle channel.
pub fn read_dataset(dir: &Path) -> Result<Dataset, SimError> {
    let (manifest, inputs) = read_filter_inputs(dir)?;
    let counts: Vec<usize> = inputs.iter().map(|f| f.observations.len()).collect();
    let ids = read_oracle(dir, &manifest, &counts)?;
    let poses = read_gt_trajectory(dir, &manifest)?;
    let world = read_gt_landmarks(dir, &manifest)?;
    let frames = inputs
        .into_iter()
        .zip(ids)
        .zip(poses)
        .map(|((f, truth_ids), true_pose)| DatasetFrame {
            frame_index: f.frame_index,
            true_pose,
            odom: f.odom,
            observations: f.observations,
            truth_ids,
        })
        .collect();
    Ok(Dataset {
        manifest,
        world,
        frames,
    })
}

pub fn image_paths(dir: &Path, frame: usize) -> (PathBuf, PathBuf) {
    (dir.join(left_image_name(frame)), dir.join(right_image_name(frame)))
}

/// Loads and checksum-verifies the rendered pair of `frame`.
pub fn read_frame_images(
    dir: &Path,
    manifest: &DatasetManifest,
    frame: usize,
) -> Result<(GrayImage, GrayImage), SimError> {
    if !manifest.has_images() {
        return Err(SimError::InvalidConfig("dataset has no rendered images".into()));
    }
    let load = |name: String| -> Result<GrayImage, SimError> {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let img = parse_pgm(&bytes).map_err(|e| SimError::SchemaViolation {
            file: name.clone(),
            line: 1,
            message: e.to_string(),
        })?;
        verify_checksum(manifest, &name, &bytes)?;
        Ok(img)
    };
    Ok((load(left_image_name(frame))?, load(right_image_name(frame))?))
}
