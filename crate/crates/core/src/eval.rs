//! Accuracy metrics and the distortion-sweep protocol.
//!
//! Every test image gets its own distortion stream derived from the sweep
//! seed and its index, so each model at each grid point sees bitwise
//! identical distorted inputs: the comparison between models is paired.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::distortion::{distort, DistortionSpec};
use crate::ensemble::{predict_batch, top_k, EnsembleModel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{tags, RngStream};

/// Severity grid for the robustness sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub noise_levels: Vec<f64>,
    pub blur_levels: Vec<usize>,
    pub include_clean: bool,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            noise_levels: (1..=10).map(|i| (i * 10) as f64).collect(),
            blur_levels: (0..8).map(|i| 2 * i + 1).collect(),
            include_clean: true,
        }
    }
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        for &sigma in &self.noise_levels {
            DistortionSpec::GaussianNoise { sigma255: sigma }.validate()?;
            if sigma.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "sweep noise levels must be integers for reporting, got {sigma}"
                )));
            }
        }
        for &k in &self.blur_levels {
            DistortionSpec::GaussianBlur { kernel: k }.validate()?;
        }
        if self.noise_levels.is_empty() && self.blur_levels.is_empty() && !self.include_clean {
            return Err(Error::InvalidArgument("sweep grid is empty".into()));
        }
        Ok(())
    }

    pub fn points_per_model(&self) -> usize {
        self.noise_levels.len() + self.blur_levels.len() + usize::from(self.include_clean)
    }
}

/// One sweep result row.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub model: String,
    /// "clean", "noise" or "blur".
    pub family: &'static str,
    pub level: i64,
    pub top1: f64,
    pub topk: f64,
    pub n: usize,
}

/// Run metadata carried alongside the rows (not part of the CSV).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepMeta {
    pub seed: u64,
    pub config_digest: String,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub meta: SweepMeta,
}

impl SweepReport {
    /// Byte-exact CSV: header `model,family,level,top1,topk,n`, UTF-8, LF
    /// line endings, integer levels, accuracies with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,family,level,top1,topk,n\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{}\n",
                row.model, row.family, row.level, row.top1, row.topk, row.n
            ));
        }
        out
    }
}

/// Distort every test image once (per-image stream derived from `seed` and
/// the image index; `None` skips distortion), predict with the ensemble, and
/// return `(top1, topk)` accuracy.
pub fn evaluate(
    model: &EnsembleModel,
    test: &Dataset,
    distortion: Option<&DistortionSpec>,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    if k == 0 || k > model.arch().num_classes() {
        return Err(Error::InvalidArgument(format!(
            "top-k rank {k} out of range for {} classes",
            model.arch().num_classes()
        )));
    }
    if let Some(spec) = distortion {
        spec.validate()?;
    }

    let root = RngStream::from_seed(seed);
    let distorted: Vec<Image> = match distortion {
        None => test.images().to_vec(),
        Some(spec) => test
            .images()
            .par_iter()
            .enumerate()
            .map(|(i, img)| {
                let mut stream = root.derive(tags::EVAL_IMAGE, i as u64);
                distort(img, spec, &mut stream)
            })
            .collect::<Result<_>>()?,
    };

    let predictions = predict_batch(model, &distorted)?;
    let mut top1_hits = 0usize;
    let mut topk_hits = 0usize;
    for (dist, &label) in predictions.iter().zip(test.labels()) {
        let ranked = top_k(dist, k)?;
        if ranked[0] == label {
            top1_hits += 1;
        }
        if ranked.contains(&label) {
            topk_hits += 1;
        }
    }
    let n = test.len() as f64;
    Ok((top1_hits as f64 / n, topk_hits as f64 / n))
}

/// Evaluate every model over the grid. Row order per model: clean first (if
/// flagged), then noise levels, then blur levels, each in grid order. All
/// models share the same seed, hence the same distorted images per point.
pub fn sweep(
    models: &[(String, EnsembleModel)],
    test: &Dataset,
    grid: &SweepGrid,
    k: usize,
    seed: u64,
    meta: SweepMeta,
) -> Result<SweepReport> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one model".into()));
    }
    grid.validate()?;

    let mut rows = Vec::with_capacity(models.len() * grid.points_per_model());
    for (tag, model) in models {
        if grid.include_clean {
            let (top1, topk) = evaluate(model, test, None, k, seed)?;
            rows.push(SweepRow {
                model: tag.clone(),
                family: "clean",
                level: 0,
                top1,
                topk,
                n: test.len(),
            });
        }
        for &sigma in &grid.noise_levels {
            let spec = DistortionSpec::GaussianNoise { sigma255: sigma };
            let (top1, topk) = evaluate(model, test, Some(&spec), k, seed)?;
            rows.push(SweepRow {
                model: tag.clone(),
                family: "noise",
                level: sigma as i64,
                top1,
                topk,
                n: test.len(),
            });
        }
        for &kernel in &grid.blur_levels {
            let spec = DistortionSpec::GaussianBlur { kernel };
            let (top1, topk) = evaluate(model, test, Some(&spec), k, seed)?;
            rows.push(SweepRow {
                model: tag.clone(),
                family: "blur",
                level: kernel as i64,
                top1,
                topk,
                n: test.len(),
            });
        }
    }
    Ok(SweepReport { rows, meta })
}
