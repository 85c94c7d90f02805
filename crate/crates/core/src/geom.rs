//! Planar pose algebra, 3D points and small Gaussian utilities.
//!
//! Conventions: the robot moves on the ground plane with pose `(x, y, theta)`.
//! World frame is z-up. Landmarks are full 3D points.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeomError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not positive semi-definite")]
    NotPsd,
}

/// Wraps an angle into `(-pi, pi]`. Exact odd multiples of pi map to `+pi`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut r = theta % (2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    } else if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Pose2::default()
    }

    /// Applies a motion expressed in this pose's frame.
    pub fn compose(&self, delta: &OdometryDelta) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2 {
            x: self.x + c * delta.dx - s * delta.dy,
            y: self.y + s * delta.dx + c * delta.dy,
            theta: normalize_angle(self.theta + delta.dtheta),
        }
    }

    /// The delta `d` with `self.compose(&d) == other`.
    pub fn relative_delta(&self, other: &Pose2) -> OdometryDelta {
        let (s, c) = self.theta.sin_cos();
        let wx = other.x - self.x;
        let wy = other.y - self.y;
        OdometryDelta {
            dx: c * wx + s * wy,
            dy: -s * wx + c * wy,
            dtheta: normalize_angle(other.theta - self.theta),
        }
    }

    /// Rotation taking robot-frame vectors into the world frame.
    pub fn rotation(&self) -> Matrix3<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    pub fn position_distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

pub fn compose(pose: &Pose2, delta: &OdometryDelta) -> Pose2 {
    pose.compose(delta)
}

pub fn relative_delta(a: &Pose2, b: &Pose2) -> OdometryDelta {
    a.relative_delta(b)
}

/// Motion increment expressed in the robot's frame before the motion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryDelta {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl OdometryDelta {
    pub fn new(dx: f64, dy: f64, dtheta: f64) -> Self {
        OdometryDelta {
            dx,
            dy,
            dtheta: normalize_angle(dtheta),
        }
    }

    pub fn zero() -> Self {
        OdometryDelta::default()
    }

    pub fn translation_norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    /// The delta undoing this one: `p.compose(d).compose(d.inverse()) == p`.
    pub fn inverse(&self) -> OdometryDelta {
        let (s, c) = self.dtheta.sin_cos();
        OdometryDelta {
            dx: -c * self.dx - s * self.dy,
            dy: s * self.dx - c * self.dy,
            dtheta: normalize_angle(-self.dtheta),
        }
    }
}

/// 3D landmark estimate: mean and covariance (m²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gaussian3 {
    pub mean: Point3,
    pub cov: Matrix3<f64>,
}

impl Gaussian3 {
    pub fn new(mean: Point3, cov: Matrix3<f64>) -> Self {
        Gaussian3 { mean, cov }
    }

    /// Symmetric within 1e-9 and no eigenvalue below -1e-12.
    pub fn is_valid(&self) -> bool {
        if !self.mean.iter().all(|v| v.is_finite()) || !self.cov.iter().all(|v| v.is_finite()) {
            return false;
        }
        if (self.cov - self.cov.transpose()).amax() > 1e-9 {
            return false;
        }
        let sym = symmetrize(&self.cov);
        sym.symmetric_eigenvalues().iter().all(|&l| l >= -1e-12)
    }

    /// Returns the estimate expressed in another frame: `rotation * x + translation`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Gaussian3 {
        Gaussian3 {
            mean: rotation * self.mean + translation,
            cov: symmetrize(&(rotation * self.cov * rotation.transpose())),
        }
    }
}

pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Squared Mahalanobis distance `rᵀ C⁻¹ r` via a Cholesky factor of `C`.
pub fn mahalanobis_sq(residual: &Vector3<f64>, cov: &Matrix3<f64>) -> Result<f64, GeomError> {
    let chol = cov.cholesky().ok_or(GeomError::NotPositiveDefinite)?;
    let y = chol
        .l_dirty()
        .solve_lower_triangular(residual)
        .ok_or(GeomError::NotPositiveDefinite)?;
    Ok(y.norm_squared())
}

const PSD_PIVOT_TOL: f64 = 1e-14;
const PSD_NEG_TOL: f64 = 1e-9;

/// Pivoted outer-product Cholesky of a PSD matrix. Returns `F` with `F Fᵀ = cov`
/// (columns of `F` are in pivot order; rank-deficient columns are zero).
pub fn psd_factor<const N: usize>(cov: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>, GeomError> {
    let mut a = symmetrize(cov);
    let mut f = SMatrix::<f64, N, N>::zeros();
    let mut eliminated = [false; N];
    let scale = (0..N).map(|i| a[(i, i)].abs()).fold(1.0_f64, f64::max);
    for step in 0..N {
        let pivot = (0..N)
            .filter(|&i| !eliminated[i])
            .max_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]).then(j.cmp(&i)));
        let Some(p) = pivot else { break };
        let d = a[(p, p)];
        if d <= PSD_PIVOT_TOL * scale {
            break;
        }
        let root = d.sqrt();
        let mut col = SVector::<f64, N>::zeros();
        for i in 0..N {
            if !eliminated[i] {
                col[i] = a[(i, p)] / root;
            }
        }
        for i in 0..N {
            for j in 0..N {
                if !eliminated[i] && !eliminated[j] {
                    a[(i, j)] -= col[i] * col[j];
                }
            }
        }
        eliminated[p] = true;
        f.set_column(step, &col);
    }
    // whatever is left must be numerically zero
    for i in 0..N {
        for j in 0..N {
            if eliminated[i] || eliminated[j] {
                continue;
            }
            let v = a[(i, j)];
            if (i == j && v < -PSD_NEG_TOL) || (i != j && v.abs() > PSD_NEG_TOL) {
                return Err(GeomError::NotPsd);
            }
        }
    }
    Ok(f)
}

/// Draws `mean + F u` with `u ~ N(0, I)` and `F Fᵀ = cov`.
pub fn sample_gaussian<const N: usize>(
    mean: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    rng: &mut RngStream,
) -> Result<SVector<f64, N>, GeomError> {
    let f = psd_factor(cov)?;
    let u = SVector::<f64, N>::from_fn(|_, _| rng.standard_normal());
    Ok(mean + f * u)
}

/// Deterministic random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8 whose 64-bit stream parameter gives independent
/// sequences for distinct ids under the same key.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    /// Stream whose id is a hash of `parts`, e.g. `(particle, frame)`.
    pub fn derived(seed: u64, parts: &[u64]) -> Self {
        RngStream::new(seed, stream_hash(parts))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_hash(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &p| splitmix64(h ^ splitmix64(p)))
}
