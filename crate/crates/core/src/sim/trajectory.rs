//! Ground-truth robot paths.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::world::Bounds;
use super::SimError;
use crate::geom::{OdometryDelta, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    /// Counter-clockwise circle whose circumference is `n_steps * step_length`.
    Loop,
    /// Back-and-forth lanes along x joined by half-circle turns.
    Lawnmower,
    Straight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub pattern: Pattern,
    pub step_length: f64,
    pub n_steps: usize,
    /// Pattern-specific default when absent.
    pub start: Option<Pose2>,
    /// Distance between lawnmower lanes; turns have half this radius.
    pub lane_spacing: f64,
    /// Clearance kept from the bounds by the default start poses.
    pub margin: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec {
            pattern: Pattern::Loop,
            step_length: 0.1,
            n_steps: 200,
            start: None,
            lane_spacing: 2.0,
            margin: 1.0,
        }
    }
}

impl TrajectorySpec {
    pub fn loop_radius(&self) -> f64 {
        self.n_steps as f64 * self.step_length / (2.0 * PI)
    }

    /// Start pose actually used for `bounds`.
    pub fn start_pose(&self, bounds: &Bounds) -> Pose2 {
        if let Some(p) = self.start {
            return p;
        }
        let (cx, cy) = bounds.center();
        match self.pattern {
            Pattern::Loop => Pose2::new(cx, cy - self.loop_radius(), 0.0),
            Pattern::Lawnmower => Pose2::new(
                bounds.x_min + self.margin + 0.5 * self.lane_spacing,
                bounds.y_min + self.margin,
                0.0,
            ),
            Pattern::Straight => Pose2::new(bounds.x_min + self.margin, cy, 0.0),
        }
    }
}

/// Motion along an arc of length `s` and curvature `k` (left positive).
fn arc(s: f64, k: f64) -> OdometryDelta {
    if k == 0.0 {
        return OdometryDelta::new(s, 0.0, 0.0);
    }
    let dth = k * s;
    OdometryDelta::new(dth.sin() / k, (1.0 - dth.cos()) / k, dth)
}

fn lawnmower(spec: &TrajectorySpec, bounds: &Bounds, start: Pose2) -> Vec<Pose2> {
    let s = spec.step_length;
    let radius = 0.5 * spec.lane_spacing;
    let leg = bounds.width() - 2.0 * spec.margin - spec.lane_spacing;
    let leg_steps = ((leg / s).floor() as usize).max(1);
    let turn_steps = ((PI * radius / s).round() as usize).max(1);
    let turn_len = PI * radius / turn_steps as f64;
    let mut poses = vec![start];
    let mut pose = start;
    let mut lane = 0usize;
    'outer: loop {
        for _ in 0..leg_steps {
            if poses.len() > spec.n_steps {
                break 'outer;
            }
            pose = pose.compose(&arc(s, 0.0));
            poses.push(pose);
        }
        let k = if lane.is_multiple_of(2) {
            1.0 / radius
        } else {
            -1.0 / radius
        };
        for _ in 0..turn_steps {
            if poses.len() > spec.n_steps {
                break 'outer;
            }
            pose = pose.compose(&arc(turn_len, k));
            poses.push(pose);
        }
        lane += 1;
    }
    poses
}

/// `n_steps + 1` poses starting at the configured start pose.
pub fn generate_trajectory(spec: &TrajectorySpec, bounds: &Bounds) -> Result<Vec<Pose2>, SimError> {
    if !(spec.step_length > 0.0 && spec.step_length.is_finite()) {
        return Err(SimError::InvalidConfig("step_length must be positive".into()));
    }
    if spec.pattern == Pattern::Lawnmower && !(spec.lane_spacing > 0.0) {
        return Err(SimError::InvalidConfig("lane_spacing must be positive".into()));
    }
    let start = spec.start_pose(bounds);
    let poses = match spec.pattern {
        Pattern::Straight => {
            let mut poses = vec![start];
            for _ in 0..spec.n_steps {
                let next = poses.last().unwrap().compose(&arc(spec.step_length, 0.0));
                poses.push(next);
            }
            poses
        }
        Pattern::Loop => {
            let r = spec.loop_radius();
            let th0 = start.theta;
            let (cx, cy) = (start.x - r * th0.sin(), start.y + r * th0.cos());
            (0..=spec.n_steps)
                .map(|k| {
                    if k == 0 || k == spec.n_steps {
                        return start;
                    }
                    let th = th0 + 2.0 * PI * k as f64 / spec.n_steps as f64;
                    Pose2::new(cx + r * th.sin(), cy - r * th.cos(), th)
                })
                .collect()
        }
        Pattern::Lawnmower => lawnmower(spec, bounds, start),
    };
    if let Some((index, p)) = poses.iter().enumerate().find(|(_, p)| !bounds.contains(p.x, p.y)) {
        return Err(SimError::OutOfBounds { index, x: p.x, y: p.y });
    }
    Ok(poses)
}
