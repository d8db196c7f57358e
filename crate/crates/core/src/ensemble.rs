//! Snapshot ensembles: softmax averaging over the trained experts.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::arch::Architecture;
use crate::autodiff::model_forward;
use crate::error::{Error, Result};
use crate::image::{Image, LabelDistribution};
use crate::tensor::Tensor;
use crate::trainer::{Snapshot, Specialty};
use crate::weights;

/// Images per forward chunk during batch prediction.
const PREDICT_CHUNK: usize = 64;

/// An ordered, non-empty collection of snapshots sharing one architecture.
#[derive(Clone, Debug)]
pub struct EnsembleModel {
    snapshots: Vec<Snapshot>,
    arch: Architecture,
}

impl EnsembleModel {
    pub fn new(snapshots: Vec<Snapshot>) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one snapshot".into()))?;
        let arch = first.params.arch().clone();
        if let Some(bad) = snapshots.iter().position(|s| s.params.arch() != &arch) {
            return Err(Error::InvalidArgument(format!(
                "snapshot {bad} uses a different architecture"
            )));
        }
        Ok(EnsembleModel { snapshots, arch })
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn num_members(&self) -> usize {
        self.snapshots.len()
    }

    /// Members in canonical summation order: ascending `cycle_index`, stable
    /// in list position for ties. Averaging in a fixed order keeps ensemble
    /// outputs bitwise reproducible however the snapshots were listed.
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.snapshots.len()).collect();
        order.sort_by_key(|&i| (self.snapshots[i].cycle_index, i));
        order
    }
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn image_batch(arch: &Architecture, images: &[Image]) -> Result<Tensor> {
    let (c, h, w) = (arch.in_channels, arch.in_height, arch.in_width);
    for img in images {
        if img.channels() != c || img.height() != h || img.width() != w {
            return Err(Error::shape(
                "prediction input",
                format!("{c}x{h}x{w}"),
                format!("{}x{}x{}", img.channels(), img.height(), img.width()),
            ));
        }
    }
    let plane = c * h * w;
    let mut data = vec![0.0; images.len() * plane];
    for (i, img) in images.iter().enumerate() {
        img.write_chw(&mut data[i * plane..(i + 1) * plane]);
    }
    Tensor::new(vec![images.len(), c, h, w], data)
}

/// Softmax output of a single snapshot on one image.
pub fn predict_single(snapshot: &Snapshot, image: &Image) -> Result<LabelDistribution> {
    let batch = image_batch(snapshot.params.arch(), std::slice::from_ref(image))?;
    let (logits, _) = model_forward(&snapshot.params, &batch)?;
    Ok(LabelDistribution::from_raw(softmax_row(logits.data())))
}

/// Ensemble prediction: the arithmetic mean of the members' softmax outputs,
/// summed in canonical order.
pub fn predict_ensemble(model: &EnsembleModel, image: &Image) -> Result<LabelDistribution> {
    Ok(predict_batch(model, std::slice::from_ref(image))?.pop().unwrap())
}

/// Ensemble predictions for many images. Chunks are independent, so they are
/// evaluated in parallel and reassembled in input order.
pub fn predict_batch(model: &EnsembleModel, images: &[Image]) -> Result<Vec<LabelDistribution>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let order = model.canonical_order();
    let k = model.arch.num_classes();
    let inv_m = 1.0 / model.snapshots.len() as f64;

    let chunk_results: Vec<Result<Vec<LabelDistribution>>> = images
        .par_chunks(PREDICT_CHUNK)
        .map(|chunk| {
            let batch = image_batch(&model.arch, chunk)?;
            let mut sums = vec![0.0; chunk.len() * k];
            for &member in &order {
                let (logits, _) = model_forward(&model.snapshots[member].params, &batch)?;
                for (i, row) in logits.data().chunks_exact(k).enumerate() {
                    for (j, p) in softmax_row(row).into_iter().enumerate() {
                        sums[i * k + j] += p;
                    }
                }
            }
            Ok(sums
                .chunks_exact(k)
                .map(|row| {
                    LabelDistribution::from_raw(row.iter().map(|&s| s * inv_m).collect())
                })
                .collect())
        })
        .collect();

    let mut out = Vec::with_capacity(images.len());
    for chunk in chunk_results {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Indices of the `k` largest coordinates, descending, ties broken toward
/// the lower index.
pub fn top_k(dist: &LabelDistribution, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > dist.len() {
        return Err(Error::InvalidArgument(format!(
            "k must lie in 1..={}, got {k}",
            dist.len()
        )));
    }
    let probs = dist.probs();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .expect("label probabilities are finite")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    Ok(order)
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

/// One line of an ensemble manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    /// Snapshot path, relative to the manifest's directory.
    pub path: String,
    pub cycle_index: usize,
    pub specialty: Specialty,
    pub final_train_loss: f64,
}

/// Write a manifest: `#` comment lines plus one
/// `path cycle_index specialty final_train_loss` line per member.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut text = String::from("# ensemble manifest: path cycle_index specialty final_train_loss\n");
    for e in entries {
        text.push_str(&format!(
            "{} {} {} {}\n",
            e.path,
            e.cycle_index,
            e.specialty.name(),
            e.final_train_loss
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut entries = Vec::new();
    for (line_no, raw_line) in text.lines().enumerate() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!(
                "{} line {}: expected 'path cycle_index specialty loss', got {raw_line:?}",
                path.display(),
                line_no + 1
            )));
        }
        let cycle_index: usize = fields[1].parse().map_err(|_| {
            Error::Parse(format!(
                "{} line {}: bad cycle index {:?}",
                path.display(),
                line_no + 1,
                fields[1]
            ))
        })?;
        if cycle_index == 0 {
            return Err(Error::Parse(format!(
                "{} line {}: cycle index must be >= 1",
                path.display(),
                line_no + 1
            )));
        }
        let specialty = Specialty::parse(fields[2]).map_err(|e| {
            Error::Parse(format!("{} line {}: {e}", path.display(), line_no + 1))
        })?;
        let final_train_loss: f64 = fields[3].parse().map_err(|_| {
            Error::Parse(format!(
                "{} line {}: bad loss {:?}",
                path.display(),
                line_no + 1,
                fields[3]
            ))
        })?;
        entries.push(ManifestEntry {
            path: fields[0].to_string(),
            cycle_index,
            specialty,
            final_train_loss,
        });
    }
    if entries.is_empty() {
        return Err(Error::Parse(format!(
            "{} lists no ensemble members",
            path.display()
        )));
    }
    Ok(entries)
}

/// Load a full ensemble from a manifest, resolving member paths relative to
/// the manifest's directory.
pub fn load_from_manifest(path: &Path) -> Result<EnsembleModel> {
    let entries = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut snapshots = Vec::with_capacity(entries.len());
    for entry in entries {
        let member_path = base.join(&entry.path);
        let params = weights::load_params(&member_path)?;
        snapshots.push(Snapshot {
            params,
            specialty: entry.specialty,
            cycle_index: entry.cycle_index,
            final_train_loss: entry.final_train_loss,
        });
    }
    EnsembleModel::new(snapshots)
}
