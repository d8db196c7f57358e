//! Quality distortions: additive Gaussian noise and Gaussian blur.
//!
//! Noise severity is expressed as a standard deviation on the 0-255 byte
//! scale and divided by 255 internally; blur severity is an odd kernel size
//! with the conventional size-to-sigma mapping. Both are deterministic given
//! an explicit [`RngStream`].

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistortionFamily {
    GaussianNoise,
    GaussianBlur,
}

impl DistortionFamily {
    pub fn name(self) -> &'static str {
        match self {
            DistortionFamily::GaussianNoise => "noise",
            DistortionFamily::GaussianBlur => "blur",
        }
    }
}

/// One concrete distortion to apply to an image or batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DistortionSpec {
    /// Additive Gaussian noise with standard deviation on the 0-255 scale.
    GaussianNoise { sigma255: f64 },
    /// Gaussian blur with an odd square kernel of the given size.
    GaussianBlur { kernel: usize },
}

impl DistortionSpec {
    pub fn family(&self) -> DistortionFamily {
        match self {
            DistortionSpec::GaussianNoise { .. } => DistortionFamily::GaussianNoise,
            DistortionSpec::GaussianBlur { .. } => DistortionFamily::GaussianBlur,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistortionSpec::GaussianNoise { sigma255 } => {
                if !sigma255.is_finite() || *sigma255 < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "noise sigma must be finite and >= 0, got {sigma255}"
                    )));
                }
            }
            DistortionSpec::GaussianBlur { kernel } => {
                if *kernel == 0 || kernel % 2 == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "blur kernel must be odd and >= 1, got {kernel}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A distortion family together with its admissible severity levels.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelFamily {
    family: DistortionFamily,
    levels: Vec<f64>,
}

impl LevelFamily {
    pub fn new(family: DistortionFamily, levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument(
                "level family must contain at least one level".into(),
            ));
        }
        for &level in &levels {
            spec_for(family, level)?.validate()?;
        }
        Ok(LevelFamily { family, levels })
    }

    /// Noise sigmas 10, 20, ..., 100.
    pub fn default_noise() -> Self {
        LevelFamily::new(
            DistortionFamily::GaussianNoise,
            (1..=10).map(|i| (i * 10) as f64).collect(),
        )
        .expect("default noise levels are valid")
    }

    /// Blur kernels 1, 3, ..., 15.
    pub fn default_blur() -> Self {
        LevelFamily::new(
            DistortionFamily::GaussianBlur,
            (0..8).map(|i| (2 * i + 1) as f64).collect(),
        )
        .expect("default blur levels are valid")
    }

    pub fn family(&self) -> DistortionFamily {
        self.family
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

fn spec_for(family: DistortionFamily, level: f64) -> Result<DistortionSpec> {
    match family {
        DistortionFamily::GaussianNoise => Ok(DistortionSpec::GaussianNoise { sigma255: level }),
        DistortionFamily::GaussianBlur => {
            if !level.is_finite() || level.fract() != 0.0 || level < 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "blur level must be a positive odd integer, got {level}"
                )));
            }
            Ok(DistortionSpec::GaussianBlur {
                kernel: level as usize,
            })
        }
    }
}

/// Draw one severity level uniformly from the family's admissible set.
pub fn sample_level(family: &LevelFamily, stream: &mut RngStream) -> Result<DistortionSpec> {
    let idx = stream.next_below(family.levels.len());
    spec_for(family.family, family.levels[idx])
}

/// Normalized 1-D Gaussian kernel for an odd size `k`.
///
/// Sigma follows the usual computer-vision size convention
/// `0.3 * ((k - 1) / 2 - 1) + 0.8` for `k >= 3`; `k == 1` is the identity
/// kernel `[1.0]`.
pub fn gaussian_kernel_1d(k: usize) -> Result<Vec<f64>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "blur kernel must be odd and >= 1, got {k}"
        )));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let radius = (k - 1) / 2;
    let sigma = 0.3 * (radius as f64 - 1.0) + 0.8;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
    let mut weights: Vec<f64> = (0..k)
        .map(|i| {
            let offset = i as f64 - radius as f64;
            (-offset * offset * inv_two_sigma_sq).exp()
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    Ok(weights)
}

#[inline]
fn reflect101(p: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut p = p.rem_euclid(period);
    if p >= n {
        p = period - p;
    }
    p as usize
}

/// One separable pass along a strided line. Taps are accumulated relative to
/// the center pixel so a flat line reproduces itself bit-for-bit.
fn blur_line(
    src: &[f64],
    dst: &mut [f64],
    len: usize,
    base: usize,
    stride: usize,
    weights: &[f64],
) {
    let radius = weights.len() / 2;
    for p in 0..len {
        let center = src[base + p * stride];
        let mut acc = center;
        for i in 1..=radius {
            let lo = src[base + reflect101(p as isize - i as isize, len) * stride];
            let hi = src[base + reflect101(p as isize + i as isize, len) * stride];
            acc += weights[radius - i] * (lo - center) + weights[radius + i] * (hi - center);
        }
        dst[base + p * stride] = acc;
    }
}

/// Separable Gaussian blur (horizontal then vertical pass) with reflect-101
/// borders, applied per channel. `k == 1` returns the input unchanged.
pub fn apply_blur(image: &Image, k: usize) -> Result<Image> {
    let weights = gaussian_kernel_1d(k)?;
    if k == 1 {
        return Ok(image.clone());
    }
    let (h, w, c) = (image.height(), image.width(), image.channels());
    let mut mid = vec![0.0; image.data().len()];
    for y in 0..h {
        for ch in 0..c {
            blur_line(image.data(), &mut mid, w, (y * w) * c + ch, c, &weights);
        }
    }
    let mut out = vec![0.0; image.data().len()];
    for x in 0..w {
        for ch in 0..c {
            blur_line(&mid, &mut out, h, x * c + ch, w * c, &weights);
        }
    }
    // Guard against sub-ulp excursions from the convex combination.
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(h, w, c, out)
}

/// Additive Gaussian noise with per-pixel, per-channel draws from `stream`,
/// clipped to the unit interval. `sigma255 == 0` returns the input unchanged
/// and consumes nothing from the stream.
pub fn apply_noise(image: &Image, sigma255: f64, stream: &mut RngStream) -> Result<Image> {
    DistortionSpec::GaussianNoise { sigma255 }.validate()?;
    if sigma255 == 0.0 {
        return Ok(image.clone());
    }
    let sigma = sigma255 / 255.0;
    let mut out = image.clone();
    for v in out.data_mut() {
        *v = (*v + sigma * stream.next_normal()).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// Apply one distortion, dispatching on the spec's family.
pub fn distort(image: &Image, spec: &DistortionSpec, stream: &mut RngStream) -> Result<Image> {
    match spec {
        DistortionSpec::GaussianNoise { sigma255 } => apply_noise(image, *sigma255, stream),
        DistortionSpec::GaussianBlur { kernel } => apply_blur(image, *kernel),
    }
}
