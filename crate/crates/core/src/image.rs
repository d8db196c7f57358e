//! Images and label distributions.

use crate::error::{Error, Result};

/// An H x W x C image with unit-interval intensities, stored row-major with
/// interleaved channels: element `(y, x, ch)` lives at `(y * w + x) * c + ch`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    h: usize,
    w: usize,
    c: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {h}x{w}x{c}"
            )));
        }
        if data.len() != h * w * c {
            return Err(Error::shape(
                "image construction",
                format!("{} elements for {h}x{w}x{c}", h * w * c),
                format!("{} elements", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "image pixel {bad} outside [0, 1]"
            )));
        }
        Ok(Image { h, w, c, data })
    }

    pub fn filled(h: usize, w: usize, c: usize, value: f64) -> Result<Self> {
        Image::new(h, w, c, vec![value; h * w * c])
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + ch]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.h == other.h && self.w == other.w && self.c == other.c
    }

    pub fn bits_eq(&self, other: &Image) -> bool {
        self.same_shape(other)
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Write the image into a planar (channel-major) slice of length
    /// `c * h * w`, the layout the classifier consumes.
    pub fn write_chw(&self, out: &mut [f64]) {
        assert_eq!(out.len(), self.data.len());
        let plane = self.h * self.w;
        for y in 0..self.h {
            for x in 0..self.w {
                let base = (y * self.w + x) * self.c;
                for ch in 0..self.c {
                    out[ch * plane + y * self.w + x] = self.data[base + ch];
                }
            }
        }
    }
}

/// A length-K probability vector over class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    /// Sum-to-one tolerance for constructed distributions.
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument(
                "label distribution must have at least one class".into(),
            ));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "label probability {bad} is negative or non-finite"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "label distribution sums to {sum}, expected 1 within {}",
                Self::SUM_TOLERANCE
            )));
        }
        Ok(LabelDistribution { probs })
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        Ok(LabelDistribution { probs })
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        LabelDistribution { probs }
    }
}
