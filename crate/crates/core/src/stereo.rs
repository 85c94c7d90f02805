//! Rectified pinhole stereo: pairing, triangulation and the `(uL, v, d)`
//! measurement model used by the landmark filters.
//!
//! Camera frame: x right, y down, z forward. The camera sits on the robot at
//! `(mount_forward_m, 0, mount_height_m)` looking along the robot's x axis.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::matching::mutual_ratio_match;
use crate::features::{Descriptor, Feature};
use crate::geom::{Gaussian3, Point3, Pose2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StereoError {
    #[error("disparity {0} px is below the minimum")]
    DisparityTooSmall(f64),
    #[error("point is not visible from this pose")]
    NotVisible,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("calibration file {path}: {message}")]
    CalibrationFile { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraCalib {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline_m: f64,
    pub width: usize,
    pub height: usize,
    pub mount_height_m: f64,
    pub mount_forward_m: f64,
}

impl Default for CameraCalib {
    fn default() -> Self {
        CameraCalib {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            baseline_m: 0.12,
            width: 640,
            height: 480,
            mount_height_m: 1.0,
            mount_forward_m: 0.0,
        }
    }
}

impl CameraCalib {
    pub fn validate(&self) -> Result<(), StereoError> {
        let bad = |m: &str| Err(StereoError::InvalidCalibration(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.baseline_m > 0.0) {
            return bad("baseline must be positive");
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) || !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad("principal point must lie inside the image");
        }
        if !self.mount_height_m.is_finite() || !self.mount_forward_m.is_finite() {
            return bad("mount offsets must be finite");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CameraCalib, StereoError> {
        let err = |message: String| StereoError::CalibrationFile {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let calib: CameraCalib = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        calib.validate()?;
        Ok(calib)
    }

    /// `fx * baseline`: disparity (px) times depth (m).
    pub fn disparity_depth_product(&self) -> f64 {
        self.fx * self.baseline_m
    }

    /// Camera-to-robot rotation.
    pub fn camera_to_robot_rotation() -> Matrix3<f64> {
        Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)
    }

    /// Camera pose in the world for a robot pose: `(R_wc, t_wc)`.
    pub fn camera_in_world(&self, robot: &Pose2) -> (Matrix3<f64>, Vector3<f64>) {
        let r_wr = robot.rotation();
        let t_rc = Vector3::new(self.mount_forward_m, 0.0, self.mount_height_m);
        let r_wc = r_wr * Self::camera_to_robot_rotation();
        let t_wc = Vector3::new(robot.x, robot.y, 0.0) + r_wr * t_rc;
        (r_wc, t_wc)
    }

    pub fn world_to_camera(&self, p: &Point3, robot: &Pose2) -> Point3 {
        let (r_wc, t_wc) = self.camera_in_world(robot);
        r_wc.transpose() * (p - t_wc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StereoParams {
    pub epipolar_tolerance_px: f64,
    pub min_disparity_px: f64,
    /// Defaults to `fx * baseline / min_depth_m` when absent.
    pub max_disparity_px: Option<f64>,
    pub min_depth_m: f64,
    pub ratio_threshold: f64,
}

impl Default for StereoParams {
    fn default() -> Self {
        StereoParams {
            epipolar_tolerance_px: 1.5,
            min_disparity_px: 0.5,
            max_disparity_px: None,
            min_depth_m: 0.2,
            ratio_threshold: 0.8,
        }
    }
}

impl StereoParams {
    pub fn max_disparity(&self, calib: &CameraCalib) -> f64 {
        self.max_disparity_px
            .unwrap_or(calib.disparity_depth_product() / self.min_depth_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub sigma_u: f64,
    pub sigma_v: f64,
    pub sigma_d: f64,
}

impl Default for ObservationNoise {
    fn default() -> Self {
        ObservationNoise {
            sigma_u: 0.5,
            sigma_v: 0.5,
            sigma_d: 1.0,
        }
    }
}

impl ObservationNoise {
    pub fn covariance(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(
            self.sigma_u * self.sigma_u,
            self.sigma_v * self.sigma_v,
            self.sigma_d * self.sigma_d,
        ))
    }
}

/// Matched left/right measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StereoObservation {
    pub u: f64,
    pub v: f64,
    /// `uL - uR`, positive.
    pub d: f64,
    pub descriptor: Descriptor,
}

impl StereoObservation {
    pub fn measurement(&self) -> Vector3<f64> {
        Vector3::new(self.u, self.v, self.d)
    }

    pub fn is_valid(&self, calib: &CameraCalib, params: &StereoParams) -> bool {
        [self.u, self.v, self.d].iter().all(|x| x.is_finite())
            && self.d > params.min_disparity_px
            && self.u - self.d >= 0.0
            && self.u - self.d < calib.width as f64
    }
}

/// Predicted measurement of a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub measurement: Vector3<f64>,
    pub camera_point: Point3,
    pub visible: bool,
}

pub fn project_camera_point(pc: &Point3, calib: &CameraCalib, params: &StereoParams) -> Projection {
    if pc.z <= params.min_depth_m {
        return Projection {
            measurement: Vector3::new(f64::NAN, f64::NAN, f64::NAN),
            camera_point: *pc,
            visible: false,
        };
    }
    let u = calib.fx * pc.x / pc.z + calib.cx;
    let v = calib.fy * pc.y / pc.z + calib.cy;
    let d = calib.disparity_depth_product() / pc.z;
    let (w, h) = (calib.width as f64, calib.height as f64);
    let visible = (0.0..w).contains(&u)
        && (0.0..h).contains(&v)
        && u - d >= 0.0
        && d > params.min_disparity_px
        && d <= params.max_disparity(calib);
    Projection {
        measurement: Vector3::new(u, v, d),
        camera_point: *pc,
        visible,
    }
}

pub fn project(p: &Point3, robot: &Pose2, calib: &CameraCalib, params: &StereoParams) -> Projection {
    project_camera_point(&calib.world_to_camera(p, robot), calib, params)
}

/// `∂(uL, v, d) / ∂(px, py, pz)` for a world point.
pub fn measurement_jacobian(
    p: &Point3,
    robot: &Pose2,
    calib: &CameraCalib,
    params: &StereoParams,
) -> Result<Matrix3<f64>, StereoError> {
    let proj = project(p, robot, calib, params);
    if !proj.visible {
        return Err(StereoError::NotVisible);
    }
    Ok(jacobian_at(&proj.camera_point, robot, calib))
}

/// Same as [`measurement_jacobian`] without the visibility check.
pub fn jacobian_at(pc: &Point3, robot: &Pose2, calib: &CameraCalib) -> Matrix3<f64> {
    let (x, y, z) = (pc.x, pc.y, pc.z);
    let iz = 1.0 / z;
    let j_cam = Matrix3::new(
        calib.fx * iz,
        0.0,
        -calib.fx * x * iz * iz,
        0.0,
        calib.fy * iz,
        -calib.fy * y * iz * iz,
        0.0,
        0.0,
        -calib.disparity_depth_product() * iz * iz,
    );
    let (r_wc, _) = calib.camera_in_world(robot);
    j_cam * r_wc.transpose()
}

/// Camera-frame point and first-order covariance from one stereo measurement.
pub fn triangulate(
    u: f64,
    v: f64,
    d: f64,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    params: &StereoParams,
) -> Result<Gaussian3, StereoError> {
    if !(d > params.min_disparity_px) {
        return Err(StereoError::DisparityTooSmall(d));
    }
    let b = calib.baseline_m;
    let z = calib.disparity_depth_product() / d;
    let x = (u - calib.cx) * z / calib.fx;
    let y = (v - calib.cy) * z / calib.fy;
    let j = Matrix3::new(
        b / d,
        0.0,
        -(u - calib.cx) * b / (d * d),
        0.0,
        calib.fx * b / (calib.fy * d),
        -(v - calib.cy) * calib.fx * b / (calib.fy * d * d),
        0.0,
        0.0,
        -calib.disparity_depth_product() / (d * d),
    );
    let cov = j * noise.covariance() * j.transpose();
    Ok(Gaussian3::new(Vector3::new(x, y, z), crate::geom::symmetrize(&cov)))
}

pub fn triangulate_observation(
    obs: &StereoObservation,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    params: &StereoParams,
) -> Result<Gaussian3, StereoError> {
    triangulate(obs.u, obs.v, obs.d, calib, noise, params)
}

/// Triangulated estimate moved into the world frame for a robot pose.
pub fn triangulate_world(
    obs: &StereoObservation,
    robot: &Pose2,
    calib: &CameraCalib,
    noise: &ObservationNoise,
    params: &StereoParams,
) -> Result<Gaussian3, StereoError> {
    let cam = triangulate_observation(obs, calib, noise, params)?;
    let (r_wc, t_wc) = calib.camera_in_world(robot);
    Ok(cam.transformed(&r_wc, &t_wc))
}

/// Features sharing one keypoint location (several dominant orientations).
fn location_groups(features: &[Feature]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, f) in features.iter().enumerate() {
        let k = &f.keypoint;
        let key = (k.u.to_bits(), k.v.to_bits(), k.scale.to_bits());
        let g = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}

/// Pairs left and right features on a rectified image pair.
///
/// Only pairs on (nearly) the same row with disparity in `(dmin, dmax]` are
/// candidates; among those, descriptor ratio test plus mutual best. Features
/// at one keypoint location differing only in orientation are paired as a
/// unit, at the closest orientation pair, so they never compete in the ratio
/// test.
pub fn stereo_pair(
    left: &[Feature],
    right: &[Feature],
    calib: &CameraCalib,
    params: &StereoParams,
) -> Vec<StereoObservation> {
    let dmax = params.max_disparity(calib);
    let (gl, gr) = (location_groups(left), location_groups(right));
    let (na, nb) = (gl.len(), gr.len());
    let mut table = vec![f64::INFINITY; na * nb];
    let mut closest = vec![(0, 0); na * nb];
    for (a, la) in gl.iter().enumerate() {
        let l = &left[la[0]].keypoint;
        for (b, rb) in gr.iter().enumerate() {
            let r = &right[rb[0]].keypoint;
            let d = l.u - r.u;
            if (l.v - r.v).abs() > params.epipolar_tolerance_px || d <= params.min_disparity_px || d > dmax {
                continue;
            }
            for &i in la {
                for &j in rb {
                    let dist = left[i].descriptor.distance(&right[j].descriptor);
                    if dist < table[a * nb + b] {
                        table[a * nb + b] = dist;
                        closest[a * nb + b] = (i, j);
                    }
                }
            }
        }
    }
    mutual_ratio_match(na, nb, &table, params.ratio_threshold)
        .into_iter()
        .map(|m| {
            let (i, j) = closest[m.index_a * nb + m.index_b];
            let l = &left[i];
            StereoObservation {
                u: l.keypoint.u,
                v: l.keypoint.v,
                d: l.keypoint.u - right[j].keypoint.u,
                descriptor: l.descriptor.clone(),
            }
        })
        .filter(|o| o.is_valid(calib, params))
        .collect()
}
