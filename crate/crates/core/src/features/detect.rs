//! Scale-space extrema detection with quadratic refinement.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::image::Plane;
use super::scale_space::{Octave, ScaleSpace};
use super::Keypoint;

/// Pixels closer than this to an octave border are never considered.
pub const DETECTION_BORDER: usize = 5;
const MAX_INTERP_STEPS: usize = 5;

/// Localized extremum in octave coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub octave: usize,
    pub layer: usize,
    pub x: usize,
    pub y: usize,
    pub offset: Vector3<f64>,
    pub value: f64,
}

fn dog_gradient(dogs: &[Plane], l: usize, x: usize, y: usize) -> Vector3<f64> {
    let d = &dogs[l];
    Vector3::new(
        0.5 * (d.at(x + 1, y) - d.at(x - 1, y)),
        0.5 * (d.at(x, y + 1) - d.at(x, y - 1)),
        0.5 * (dogs[l + 1].at(x, y) - dogs[l - 1].at(x, y)),
    )
}

fn dog_hessian(dogs: &[Plane], l: usize, x: usize, y: usize) -> Matrix3<f64> {
    let (prev, cur, next) = (&dogs[l - 1], &dogs[l], &dogs[l + 1]);
    let c = cur.at(x, y);
    let dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2.0 * c;
    let dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2.0 * c;
    let dss = next.at(x, y) + prev.at(x, y) - 2.0 * c;
    let dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) - cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
    let dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) - prev.at(x + 1, y) + prev.at(x - 1, y));
    let dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) - prev.at(x, y + 1) + prev.at(x, y - 1));
    Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss)
}

/// Trace² / det of the spatial 2x2 DoG Hessian; `None` when det ≤ 0.
pub fn edge_score(dog: &Plane, x: usize, y: usize) -> Option<f64> {
    let c = dog.at(x, y);
    let dxx = dog.at(x + 1, y) + dog.at(x - 1, y) - 2.0 * c;
    let dyy = dog.at(x, y + 1) + dog.at(x, y - 1) - 2.0 * c;
    let dxy = 0.25 * (dog.at(x + 1, y + 1) - dog.at(x - 1, y + 1) - dog.at(x + 1, y - 1) + dog.at(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    (det > 0.0).then(|| tr * tr / det)
}

fn is_extremum(dogs: &[Plane], l: usize, x: usize, y: usize) -> bool {
    let v = dogs[l].at(x, y);
    let mut is_max = v > 0.0;
    let mut is_min = v < 0.0;
    for d in &dogs[l - 1..=l + 1] {
        for yy in y - 1..=y + 1 {
            for xx in x - 1..=x + 1 {
                let n = d.at(xx, yy);
                is_max &= v >= n;
                is_min &= v <= n;
            }
        }
        if !is_max && !is_min {
            return false;
        }
    }
    is_max || is_min
}

/// Iterative quadratic fit around a discrete extremum.
fn refine(
    oct: &Octave,
    scales: usize,
    mut l: usize,
    mut x: usize,
    mut y: usize,
) -> Option<(usize, usize, usize, Vector3<f64>, f64)> {
    let dogs = &oct.dogs;
    let (w, h) = (oct.width(), oct.height());
    for _ in 0..MAX_INTERP_STEPS {
        let g = dog_gradient(dogs, l, x, y);
        let hess = dog_hessian(dogs, l, x, y);
        let offset = -hess.lu().solve(&g)?;
        if offset.iter().all(|o| o.abs() < 0.5) {
            let value = dogs[l].at(x, y) + 0.5 * g.dot(&offset);
            return Some((l, x, y, offset, value));
        }
        if offset.iter().any(|o| !o.is_finite() || o.abs() > 1e6) {
            return None;
        }
        let nx = x as i64 + offset.x.round() as i64;
        let ny = y as i64 + offset.y.round() as i64;
        let nl = l as i64 + offset.z.round() as i64;
        let b = DETECTION_BORDER as i64;
        if nl < 1 || nl > scales as i64 || nx < b || ny < b || nx >= w as i64 - b || ny >= h as i64 - b {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        l = nl as usize;
    }
    None
}

/// Finds, refines and filters DoG extrema in one octave.
pub fn detect_in_octave(space: &ScaleSpace, oct: &Octave) -> Vec<Extremum> {
    let p = &space.params;
    let s = p.scales_per_octave;
    let threshold = p.effective_contrast_threshold();
    let edge_limit = p.edge_limit();
    let (w, h) = (oct.width(), oct.height());
    if w <= 2 * DETECTION_BORDER || h <= 2 * DETECTION_BORDER {
        return Vec::new();
    }

    let candidates: Vec<(usize, usize, usize)> = (1..=s)
        .flat_map(|l| (DETECTION_BORDER..h - DETECTION_BORDER).map(move |y| (l, y)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .flat_map_iter(|(l, y)| {
            let dogs = &oct.dogs;
            (DETECTION_BORDER..w - DETECTION_BORDER).filter_map(move |x| {
                let v = dogs[l].at(x, y);
                (v.abs() > 0.5 * threshold && is_extremum(dogs, l, x, y)).then_some((l, x, y))
            })
        })
        .collect();

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (l, x, y) in candidates {
        let Some((l, x, y, offset, value)) = refine(oct, s, l, x, y) else {
            continue;
        };
        if value.abs() < threshold {
            continue;
        }
        match edge_score(&oct.dogs[l], x, y) {
            Some(score) if score < edge_limit => {}
            _ => continue,
        }
        if !seen.insert((l, x, y)) {
            continue;
        }
        out.push(Extremum {
            octave: oct.index,
            layer: l,
            x,
            y,
            offset,
            value,
        });
    }
    out
}

/// Keypoint in input image coordinates (orientation still unassigned).
pub fn extremum_to_keypoint(space: &ScaleSpace, e: &Extremum) -> Keypoint {
    let f = space.octave_to_input(e.octave);
    Keypoint {
        u: (e.x as f64 + e.offset.x) * f,
        v: (e.y as f64 + e.offset.y) * f,
        scale: space.level_sigma(e.layer as f64 + e.offset.z) * f,
        orientation: 0.0,
        response: e.value,
        octave: e.octave,
        layer: e.layer,
    }
}

pub fn detect_extrema(space: &ScaleSpace) -> Vec<Extremum> {
    space
        .octaves
        .iter()
        .flat_map(|oct| detect_in_octave(space, oct))
        .collect()
}

/// DoG extrema refined, contrast- and edge-filtered, in canonical order.
pub fn detect_keypoints(space: &ScaleSpace) -> Vec<Keypoint> {
    let mut kps: Vec<Keypoint> = detect_extrema(space)
        .iter()
        .map(|e| extremum_to_keypoint(space, e))
        .collect();
    kps.sort_by(Keypoint::canonical_cmp);
    kps
}
