//! Gaussian and difference-of-Gaussian pyramids.

use super::image::{GrayImage, Plane, MIN_IMAGE_SIZE};
use super::{FeatureError, SiftParams};

#[derive(Debug, Clone)]
pub struct Octave {
    pub index: usize,
    /// `s + 3` levels; level `i` carries blur `sigma0 * 2^(i/s)` in octave pixels.
    pub gaussians: Vec<Plane>,
    /// `s + 2` adjacent differences `gaussians[i+1] - gaussians[i]`.
    pub dogs: Vec<Plane>,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.gaussians[0].width
    }

    pub fn height(&self) -> usize {
        self.gaussians[0].height
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub params: SiftParams,
    pub octaves: Vec<Octave>,
    pub base_width: usize,
    pub base_height: usize,
}

impl ScaleSpace {
    /// Factor mapping octave `o` pixel coordinates to input image coordinates.
    pub fn octave_to_input(&self, octave: usize) -> f64 {
        let f = (1u64 << octave) as f64;
        if self.params.upsample {
            0.5 * f
        } else {
            f
        }
    }

    /// Blur of `level` (possibly fractional) in its own octave's pixels.
    pub fn level_sigma(&self, level: f64) -> f64 {
        self.params.sigma0 * (level / self.params.scales_per_octave as f64).exp2()
    }
}

pub fn octave_count(width: usize, height: usize) -> usize {
    let mut n = 0;
    let mut m = width.min(height);
    while m >= MIN_IMAGE_SIZE {
        n += 1;
        m /= 2;
    }
    n
}

pub fn build_scale_space(img: &GrayImage, params: &SiftParams) -> Result<ScaleSpace, FeatureError> {
    params.validate()?;
    let s = params.scales_per_octave;
    let mut base = img.to_plane();
    let mut current_blur = params.assumed_blur;
    if params.upsample {
        base = base.upsample2();
        current_blur *= 2.0;
    }
    if base.width.min(base.height) < MIN_IMAGE_SIZE {
        return Err(FeatureError::ImageTooSmall {
            width: base.width,
            height: base.height,
        });
    }
    let (base_width, base_height) = (base.width, base.height);
    let extra = params.sigma0 * params.sigma0 - current_blur * current_blur;
    if extra > 0.0 {
        base = base.blur(extra.sqrt());
    }

    let n_octaves = octave_count(base_width, base_height).min(params.max_octaves.unwrap_or(usize::MAX));
    let k = (1.0 / s as f64).exp2();
    // incremental blur taking level i-1 to level i (same for every octave)
    let increments: Vec<f64> = (1..s + 3)
        .map(|i| {
            let prev = params.sigma0 * k.powi(i as i32 - 1);
            let next = prev * k;
            (next * next - prev * prev).sqrt()
        })
        .collect();

    let mut octaves: Vec<Octave> = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        let first = if o == 0 {
            base.clone()
        } else {
            octaves[o - 1].gaussians[s].downsample2()
        };
        let mut gaussians = Vec::with_capacity(s + 3);
        gaussians.push(first);
        for inc in &increments {
            let next = gaussians.last().unwrap().blur(*inc);
            gaussians.push(next);
        }
        let dogs = gaussians.windows(2).map(|w| w[1].sub(&w[0])).collect();
        octaves.push(Octave {
            index: o,
            gaussians,
            dogs,
        });
    }
    Ok(ScaleSpace {
        params: params.clone(),
        octaves,
        base_width,
        base_height,
    })
}
