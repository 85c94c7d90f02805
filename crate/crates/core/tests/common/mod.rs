#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vslam_core::features::{Descriptor, GrayImage};

/// Sum of random Gaussian blobs on a mid-gray background, clamped to [0, 1].
pub fn blob_texture(width: usize, height: usize, n_blobs: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(1.5..6.0),
                rng.random_range(-0.35..0.35),
            )
        })
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        let mut v = 0.5;
        for &(bx, by, s, a) in &blobs {
            let r2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
            if r2 < 25.0 * s * s {
                v += a * (-r2 / (2.0 * s * s)).exp();
            }
        }
        v.clamp(0.0, 1.0)
    })
    .unwrap()
}

pub fn crop(img: &GrayImage, x0: usize, y0: usize, w: usize, h: usize) -> GrayImage {
    GrayImage::from_fn(w, h, |x, y| img.get(x0 + x, y0 + y)).unwrap()
}

/// Quarter turn: output(x, y) = input(y, n - 1 - x) for a square image.
pub fn rotate90(img: &GrayImage) -> GrayImage {
    let n = img.width();
    assert_eq!(n, img.height());
    GrayImage::from_fn(n, n, |x, y| img.get(y, n - 1 - x)).unwrap()
}

pub fn gaussian_blob(width: usize, height: usize, cx: f64, cy: f64, sigma: f64) -> GrayImage {
    GrayImage::from_fn(width, height, |x, y| {
        let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        0.1 + 0.8 * (-r2 / (2.0 * sigma * sigma)).exp()
    })
    .unwrap()
}

pub fn random_descriptor(rng: &mut ChaCha8Rng) -> Descriptor {
    let raw: Vec<f64> = (0..128).map(|_| rng.random::<f64>()).collect();
    Descriptor::from_raw(&raw).unwrap()
}
