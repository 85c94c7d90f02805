//! Grayscale float images, separable Gaussian blur and PGM I/O.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::FeatureError;

pub const MIN_IMAGE_SIZE: usize = 16;

/// Row-major float image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, FeatureError> {
        if width < MIN_IMAGE_SIZE || height < MIN_IMAGE_SIZE {
            return Err(FeatureError::ImageTooSmall { width, height });
        }
        if pixels.len() != width * height {
            return Err(FeatureError::InvalidImage(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(FeatureError::InvalidImage(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(GrayImage { width, height, pixels })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, FeatureError> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, FeatureError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        GrayImage::new(width, height, pixels)
    }

    /// 8-bit grayscale samples scaled by 1/255.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, FeatureError> {
        GrayImage::new(width, height, bytes.iter().map(|&b| b as f64 / 255.0).collect())
    }

    /// Interleaved 8-bit RGB converted with Rec. 601 luma.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self, FeatureError> {
        if rgb.len() != 3 * width * height {
            return Err(FeatureError::InvalidImage(format!(
                "expected {} rgb bytes, got {}",
                3 * width * height,
                rgb.len()
            )));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect();
        GrayImage::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub(crate) fn to_plane(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.pixels.clone(),
        }
    }
}

/// Unchecked float buffer used inside the scale space (DoG values are signed).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sub(&self, other: &Plane) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Bilinear 2x upsampling; output pixel `X` samples input coordinate `X / 2`.
    pub fn upsample2(&self) -> Plane {
        let (w, h) = (self.width, self.height);
        let (ow, oh) = (2 * w, 2 * h);
        let mut data = vec![0.0; ow * oh];
        data.par_chunks_mut(ow).enumerate().for_each(|(oy, row)| {
            let y0 = oy / 2;
            let y1 = if oy % 2 == 1 { (y0 + 1).min(h - 1) } else { y0 };
            for (ox, out) in row.iter_mut().enumerate() {
                let x0 = ox / 2;
                let x1 = if ox % 2 == 1 { (x0 + 1).min(w - 1) } else { x0 };
                *out = 0.25 * (self.at(x0, y0) + self.at(x1, y0) + self.at(x0, y1) + self.at(x1, y1));
            }
        });
        Plane {
            width: ow,
            height: oh,
            data,
        }
    }

    /// Keeps every other pixel: output is `floor(w/2) x floor(h/2)`.
    pub fn downsample2(&self) -> Plane {
        let (ow, oh) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(ow * oh);
        for y in 0..oh {
            for x in 0..ow {
                data.push(self.at(2 * x, 2 * y));
            }
        }
        Plane {
            width: ow,
            height: oh,
            data,
        }
    }

    pub fn blur(&self, sigma: f64) -> Plane {
        if sigma <= 0.0 {
            return self.clone();
        }
        let kernel = gaussian_kernel(sigma);
        let r = (kernel.len() / 2) as isize;
        let (w, h) = (self.width, self.height);

        let mut tmp = vec![0.0; w * h];
        tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            // row extended by clamping, so the inner loop needs no bounds logic
            let padded: Vec<f64> = (-r..w as isize + r)
                .map(|x| self.data[y * w + x.clamp(0, w as isize - 1) as usize])
                .collect();
            for (out, window) in row.iter_mut().zip(padded.windows(kernel.len())) {
                let mut acc = 0.0;
                for (wk, s) in kernel.iter().zip(window) {
                    acc += wk * s;
                }
                *out = acc;
            }
        });

        let mut data = vec![0.0; w * h];
        data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (k, wk) in kernel.iter().enumerate() {
                let yi = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                let src = &tmp[yi * w..(yi + 1) * w];
                for (out, s) in row.iter_mut().zip(src) {
                    *out += wk * s;
                }
            }
        });
        Plane {
            width: w,
            height: h,
            data,
        }
    }
}

/// Normalized 1D Gaussian with radius `ceil(4 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge-clamp borders. `sigma == 0` is the identity.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let p = img.to_plane().blur(sigma);
    GrayImage {
        width: p.width,
        height: p.height,
        // convex combination of [0,1] values, only rounding can leave the range
        pixels: p.data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    }
}

fn pgm_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize), FeatureError> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        if start == i {
            return Err(FeatureError::Pgm("unexpected end of header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, i))
}

/// Parses binary (P5) or ASCII (P2) 8-bit PGM data.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, FeatureError> {
    let (header, end) = pgm_tokens(bytes, 4)?;
    let magic = header[0].as_str();
    let parse = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| FeatureError::Pgm(format!("bad {what}: {s:?}")))
    };
    let width = parse(&header[1], "width")?;
    let height = parse(&header[2], "height")?;
    let maxval = parse(&header[3], "maxval")?;
    if maxval != 255 {
        return Err(FeatureError::Pgm(format!("maxval must be 255, got {maxval}")));
    }
    let n = width * height;
    match magic {
        "P5" => {
            // exactly one whitespace byte separates header from raster
            let start = end + 1;
            if bytes.len() < start + n {
                return Err(FeatureError::Pgm(format!(
                    "raster truncated: need {n} bytes, have {}",
                    bytes.len().saturating_sub(start)
                )));
            }
            GrayImage::from_u8(width, height, &bytes[start..start + n])
        }
        "P2" => {
            let text =
                std::str::from_utf8(&bytes[end..]).map_err(|_| FeatureError::Pgm("non-ascii P2 raster".into()))?;
            let mut values = Vec::with_capacity(n);
            for tok in text
                .lines()
                .map(|l| l.split('#').next().unwrap_or(""))
                .flat_map(str::split_whitespace)
            {
                let v: u16 = tok
                    .parse()
                    .map_err(|_| FeatureError::Pgm(format!("bad sample {tok:?}")))?;
                if v > 255 {
                    return Err(FeatureError::Pgm(format!("sample {v} exceeds maxval")));
                }
                values.push(v as u8);
            }
            if values.len() != n {
                return Err(FeatureError::Pgm(format!("expected {n} samples, got {}", values.len())));
            }
            GrayImage::from_u8(width, height, &values)
        }
        other => Err(FeatureError::Pgm(format!("unsupported magic {other:?}"))),
    }
}

pub fn read_pgm(path: &Path) -> Result<GrayImage, FeatureError> {
    let bytes = fs::read(path).map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))?;
    parse_pgm(&bytes)
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<(), FeatureError> {
    let mut f = fs::File::create(path).map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(&encode_pgm(img))
        .map_err(|e| FeatureError::Io(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(w: usize, h: usize, seed: u64) -> GrayImage {
        let mut s = seed;
        GrayImage::from_fn(w, h, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap()
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = GrayImage::constant(40, 30, 0.37).unwrap();
        for sigma in [0.5, 1.6, 3.0, 7.5] {
            let b = gaussian_blur(&img, sigma);
            let err = b.pixels().iter().map(|p| (p - 0.37).abs()).fold(0.0, f64::max);
            assert!(err < 1e-9, "sigma {sigma}: {err}");
        }
    }

    #[test]
    fn zero_sigma_is_identity() {
        let img = noise_image(20, 20, 3);
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }

    #[test]
    fn blur_semigroup() {
        let img = noise_image(96, 96, 11);
        let (a, b) = (1.2, 1.6);
        let twice = gaussian_blur(&gaussian_blur(&img, a), b);
        let once = gaussian_blur(&img, (a * a + b * b).sqrt());
        let margin = 20;
        let mut worst = 0.0_f64;
        for y in margin..96 - margin {
            for x in margin..96 - margin {
                worst = worst.max((twice.get(x, y) - once.get(x, y)).abs());
            }
        }
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn kernel_radius_and_sum() {
        let k = gaussian_kernel(1.3);
        assert_eq!(k.len(), 2 * 6 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pgm_round_trip_binary_and_ascii() {
        let img = GrayImage::from_u8(16, 17, &(0..16 * 17).map(|i| (i % 256) as u8).collect::<Vec<_>>()).unwrap();
        let bytes = encode_pgm(&img);
        assert_eq!(parse_pgm(&bytes).unwrap(), img);

        let mut ascii = String::from("P2\n# a comment\n16 17\n255\n");
        for v in img.to_u8() {
            ascii.push_str(&format!("{v} "));
        }
        assert_eq!(parse_pgm(ascii.as_bytes()).unwrap(), img);
    }

    #[test]
    fn pgm_rejects_bad_maxval_and_truncation() {
        assert!(matches!(parse_pgm(b"P5\n16 16\n65535\n"), Err(FeatureError::Pgm(_))));
        let mut bytes = b"P5\n16 16\n255\n".to_vec();
        bytes.extend(vec![0u8; 100]);
        assert!(matches!(parse_pgm(&bytes), Err(FeatureError::Pgm(_))));
    }

    #[test]
    fn luma_conversion() {
        let rgb: Vec<u8> = std::iter::repeat_n([255u8, 0, 0], 256).flatten().collect();
        let img = GrayImage::from_rgb8(16, 16, &rgb).unwrap();
        assert!((img.get(3, 3) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn resampling_dimensions() {
        let p = noise_image(33, 17, 1).to_plane();
        let up = p.upsample2();
        assert_eq!((up.width, up.height), (66, 34));
        assert_eq!(up.at(4, 6), p.at(2, 3));
        let down = p.downsample2();
        assert_eq!((down.width, down.height), (16, 8));
    }
}
