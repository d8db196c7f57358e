//! Random-quality mixup: convex blends of clean samples with distorted
//! copies at a per-batch random severity.

use rayon::prelude::*;

use crate::distortion::{distort, sample_level, LevelFamily};
use crate::error::{Error, Result};
use crate::image::{Image, LabelDistribution};
use crate::rng::{tags, RngStream};

/// A labeled training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: LabelDistribution,
}

/// How the mixing coefficient is drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaLaw {
    Fixed(f64),
    Uniform01,
    /// Symmetric Beta(a, a).
    Beta(f64),
}

/// Which distorted copy a clean sample is blended with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// Each sample is mixed with its own distorted copy.
    SameSample,
    /// Distorted copies are permuted within the batch before pairing; labels
    /// are mixed accordingly.
    ShuffledWithinBatch,
}

/// Whether lambda is drawn once per batch or once per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DrawScope {
    PerBatch,
    PerSample,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixPolicy {
    pub lambda_law: LambdaLaw,
    pub pairing: Pairing,
    pub draw_scope: DrawScope,
}

impl Default for MixPolicy {
    fn default() -> Self {
        MixPolicy {
            lambda_law: LambdaLaw::Uniform01,
            pairing: Pairing::SameSample,
            draw_scope: DrawScope::PerBatch,
        }
    }
}

impl MixPolicy {
    pub fn validate(&self) -> Result<()> {
        match self.lambda_law {
            LambdaLaw::Fixed(l) if !(0.0..=1.0).contains(&l) => Err(Error::InvalidArgument(
                format!("fixed lambda must lie in [0, 1], got {l}"),
            )),
            LambdaLaw::Beta(a) if !(a.is_finite() && a > 0.0) => Err(Error::InvalidArgument(
                format!("beta parameter must be positive, got {a}"),
            )),
            _ => Ok(()),
        }
    }
}

fn draw_lambda(law: LambdaLaw, stream: &mut RngStream) -> f64 {
    match law {
        LambdaLaw::Fixed(l) => l,
        LambdaLaw::Uniform01 => stream.next_f64(),
        LambdaLaw::Beta(a) => {
            // Johnk's algorithm for Beta(a, a); rejection loop, deterministic
            // given the stream.
            loop {
                let x = stream.next_f64().powf(1.0 / a);
                let y = stream.next_f64().powf(1.0 / a);
                if x + y <= 1.0 && x + y > 0.0 {
                    return x / (x + y);
                }
            }
        }
    }
}

/// Blend one clean/noisy pair: `x_f = l*x_clean + (1-l)*x_noisy` and the same
/// for labels. `l == 1` returns the clean sample exactly, `l == 0` the noisy
/// one.
pub fn mix_pair(clean: &Sample, noisy: &Sample, lambda: f64) -> Result<Sample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    if !clean.image.same_shape(&noisy.image) {
        return Err(Error::shape(
            "mix_pair images",
            format!(
                "{}x{}x{}",
                clean.image.height(),
                clean.image.width(),
                clean.image.channels()
            ),
            format!(
                "{}x{}x{}",
                noisy.image.height(),
                noisy.image.width(),
                noisy.image.channels()
            ),
        ));
    }
    if clean.label.len() != noisy.label.len() {
        return Err(Error::shape(
            "mix_pair labels",
            format!("{} classes", clean.label.len()),
            format!("{} classes", noisy.label.len()),
        ));
    }
    if lambda == 1.0 {
        return Ok(clean.clone());
    }
    if lambda == 0.0 {
        return Ok(noisy.clone());
    }

    let pixels = blend(clean.image.data(), noisy.image.data(), lambda);
    let probs = blend(clean.label.probs(), noisy.label.probs(), lambda);
    Ok(Sample {
        image: Image::new(
            clean.image.height(),
            clean.image.width(),
            clean.image.channels(),
            pixels,
        )?,
        label: LabelDistribution::new(probs)?,
    })
}

/// `l*a + (1-l)*b` elementwise, clamped into the source interval so rounding
/// can never push a blend outside [min(a,b), max(a,b)].
fn blend(a: &[f64], b: &[f64], lambda: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&av, &bv)| {
            let mixed = bv + lambda * (av - bv);
            mixed.clamp(av.min(bv), av.max(bv))
        })
        .collect()
}

/// Mix a whole batch against distorted copies of itself.
///
/// Draw order from `stream` is fixed: (1) one severity level for the batch,
/// (2) lambda(s) per the policy scope, (3) the pairing permutation if
/// shuffled. Per-sample distortion streams are then forked from the batch
/// stream, so the distortion work itself can run in parallel.
pub fn mix_batch(
    batch: &[Sample],
    family: &LevelFamily,
    policy: &MixPolicy,
    stream: &mut RngStream,
) -> Result<Vec<Sample>> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("mix_batch requires a non-empty batch".into()));
    }
    policy.validate()?;

    let spec = sample_level(family, stream)?;
    let lambdas: Vec<f64> = match policy.draw_scope {
        DrawScope::PerBatch => vec![draw_lambda(policy.lambda_law, stream); batch.len()],
        DrawScope::PerSample => (0..batch.len())
            .map(|_| draw_lambda(policy.lambda_law, stream))
            .collect(),
    };
    let pairing: Vec<usize> = match policy.pairing {
        Pairing::SameSample => (0..batch.len()).collect(),
        Pairing::ShuffledWithinBatch => {
            let mut idx: Vec<usize> = (0..batch.len()).collect();
            stream.shuffle(&mut idx);
            idx
        }
    };

    let distorted: Vec<Image> = batch
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            let mut sample_stream = stream.derive(tags::MIX_SAMPLE, i as u64);
            distort(&sample.image, &spec, &mut sample_stream)
        })
        .collect::<Result<_>>()?;

    batch
        .iter()
        .enumerate()
        .map(|(i, clean)| {
            let j = pairing[i];
            let noisy = Sample {
                image: distorted[j].clone(),
                label: batch[j].label.clone(),
            };
            mix_pair(clean, &noisy, lambdas[i])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::DistortionFamily;

    fn sample(pixels: Vec<f64>, class: usize, k: usize) -> Sample {
        let n = pixels.len();
        Sample {
            image: Image::new(1, n, 1, pixels).unwrap(),
            label: LabelDistribution::one_hot(class, k).unwrap(),
        }
    }

    fn random_sample(seed: u64) -> Sample {
        let mut s = RngStream::from_seed(seed);
        Sample {
            image: Image::new(4, 4, 3, (0..48).map(|_| s.next_f64()).collect()).unwrap(),
            label: LabelDistribution::one_hot(seed as usize % 4, 4).unwrap(),
        }
    }

    #[test]
    fn lambda_one_returns_clean_exactly() {
        let clean = random_sample(1);
        let noisy = random_sample(2);
        let mixed = mix_pair(&clean, &noisy, 1.0).unwrap();
        assert!(mixed.image.bits_eq(&clean.image));
        assert_eq!(mixed.label, clean.label);
    }

    #[test]
    fn lambda_zero_returns_noisy_exactly() {
        let clean = random_sample(1);
        let noisy = random_sample(2);
        let mixed = mix_pair(&clean, &noisy, 0.0).unwrap();
        assert!(mixed.image.bits_eq(&noisy.image));
        assert_eq!(mixed.label, noisy.label);
    }

    #[test]
    fn midpoint_arithmetic() {
        let clean = sample(vec![0.2, 0.4], 0, 2);
        let noisy = sample(vec![0.6, 0.0], 1, 2);
        let mixed = mix_pair(&clean, &noisy, 0.5).unwrap();
        assert_eq!(mixed.image.data(), &[0.4, 0.2]);
        assert_eq!(mixed.label.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn out_of_range_lambda_rejected() {
        let a = random_sample(1);
        let b = random_sample(2);
        assert!(mix_pair(&a, &b, -0.01).is_err());
        assert!(mix_pair(&a, &b, 1.01).is_err());
        assert!(mix_pair(&a, &b, f64::NAN).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let a = random_sample(1);
        let b = sample(vec![0.1, 0.2], 0, 4);
        assert!(mix_pair(&a, &b, 0.5).is_err());
    }

    #[test]
    fn fixed_lambda_one_passes_batch_through() {
        let batch: Vec<Sample> = (0..5).map(random_sample).collect();
        let policy = MixPolicy {
            lambda_law: LambdaLaw::Fixed(1.0),
            ..MixPolicy::default()
        };
        let mut stream = RngStream::from_seed(3);
        let out = mix_batch(&batch, &LevelFamily::default_noise(), &policy, &mut stream).unwrap();
        for (o, i) in out.iter().zip(&batch) {
            assert!(o.image.bits_eq(&i.image));
            assert_eq!(o.label, i.label);
        }
    }

    #[test]
    fn same_sample_pairing_fixes_labels() {
        let batch: Vec<Sample> = (0..8).map(random_sample).collect();
        let mut stream = RngStream::from_seed(5);
        let out = mix_batch(
            &batch,
            &LevelFamily::default_noise(),
            &MixPolicy::default(),
            &mut stream,
        )
        .unwrap();
        assert_eq!(out.len(), batch.len());
        for (o, i) in out.iter().zip(&batch) {
            assert_eq!(o.label, i.label, "same-sample pairing must keep labels");
        }
    }

    #[test]
    fn composed_identities_pass_through() {
        let batch: Vec<Sample> = (0..4).map(random_sample).collect();
        let family = LevelFamily::new(DistortionFamily::GaussianNoise, vec![0.0]).unwrap();
        let policy = MixPolicy {
            lambda_law: LambdaLaw::Fixed(0.0),
            ..MixPolicy::default()
        };
        let mut stream = RngStream::from_seed(6);
        let out = mix_batch(&batch, &family, &policy, &mut stream).unwrap();
        for (o, i) in out.iter().zip(&batch) {
            assert!(o.image.bits_eq(&i.image));
            assert_eq!(o.label, i.label);
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let mut stream = RngStream::from_seed(0);
        assert!(mix_batch(
            &[],
            &LevelFamily::default_noise(),
            &MixPolicy::default(),
            &mut stream
        )
        .is_err());
    }

    #[test]
    fn batch_is_deterministic() {
        let batch: Vec<Sample> = (0..6).map(random_sample).collect();
        let policy = MixPolicy {
            pairing: Pairing::ShuffledWithinBatch,
            draw_scope: DrawScope::PerSample,
            lambda_law: LambdaLaw::Beta(0.4),
        };
        let out1 = mix_batch(
            &batch,
            &LevelFamily::default_blur(),
            &policy,
            &mut RngStream::from_seed(11),
        )
        .unwrap();
        let out2 = mix_batch(
            &batch,
            &LevelFamily::default_blur(),
            &policy,
            &mut RngStream::from_seed(11),
        )
        .unwrap();
        for (a, b) in out1.iter().zip(&out2) {
            assert!(a.image.bits_eq(&b.image));
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn shuffled_pairing_mixes_labels_consistently() {
        let batch: Vec<Sample> = (0..8).map(random_sample).collect();
        let policy = MixPolicy {
            pairing: Pairing::ShuffledWithinBatch,
            lambda_law: LambdaLaw::Fixed(0.25),
            draw_scope: DrawScope::PerBatch,
        };
        let family = LevelFamily::new(DistortionFamily::GaussianNoise, vec![0.0]).unwrap();
        let mut stream = RngStream::from_seed(13);
        let out = mix_batch(&batch, &family, &policy, &mut stream).unwrap();
        // sigma 0 keeps images identifiable: each output must be the blend of
        // its own image with some partner, and the label blend must use the
        // same partner.
        for (i, o) in out.iter().enumerate() {
            let partner = (0..batch.len()).find(|&j| {
                let expected = 0.25 * batch[i].image.data()[0] + 0.75 * batch[j].image.data()[0];
                (o.image.data()[0] - expected).abs() < 1e-12
            });
            let j = partner.expect("output must blend with a batch member");
            let expected_label: Vec<f64> = batch[i]
                .label
                .probs()
                .iter()
                .zip(batch[j].label.probs())
                .map(|(a, b)| 0.25 * a + 0.75 * b)
                .collect();
            for (got, want) in o.label.probs().iter().zip(&expected_label) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convexity_and_normalization_hold() {
        let mut stream = RngStream::from_seed(17);
        for trial in 0..200 {
            let clean = random_sample(trial);
            let noisy = random_sample(trial + 1000);
            let lambda = stream.next_f64();
            let mixed = mix_pair(&clean, &noisy, lambda).unwrap();
            for ((m, c), n) in mixed
                .image
                .data()
                .iter()
                .zip(clean.image.data())
                .zip(noisy.image.data())
            {
                assert!(*m >= c.min(*n) && *m <= c.max(*n));
            }
            let sum: f64 = mixed.label.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }
}
