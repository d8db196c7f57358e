//! Datasets: the synthetic shape classifier corpus, the QRDS binary format,
//! PPM directory ingestion, and stratified splitting.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{tags, RngStream};

/// A labeled image classification dataset with uniform dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<Image>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} labels", images.len()),
                format!("{} labels", labels.len()),
            ));
        }
        if class_names.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one class".into()));
        }
        if let Some(first) = images.first() {
            if let Some(bad) = images.iter().position(|img| !img.same_shape(first)) {
                return Err(Error::InvalidArgument(format!(
                    "image {bad} has different dimensions from image 0"
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        Ok(Dataset {
            images,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Dimensions `(h, w, c)` of the images, if any.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.images
            .first()
            .map(|i| (i.height(), i.width(), i.channels()))
    }

    pub fn bits_eq(&self, other: &Dataset) -> bool {
        self.labels == other.labels
            && self.class_names == other.class_names
            && self.images.len() == other.images.len()
            && self
                .images
                .iter()
                .zip(&other.images)
                .all(|(a, b)| a.bits_eq(b))
    }
}

// ---------------------------------------------------------------------------
// synthetic data
// ---------------------------------------------------------------------------

/// Shape families the synthetic generator can draw. All classes share the
/// same foreground intensity distribution, so class identity is carried by
/// geometry alone rather than by color statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeClass {
    Disk,
    Square,
    Cross,
    DiagonalStripes,
}

impl ShapeClass {
    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Disk => "disk",
            ShapeClass::Square => "square",
            ShapeClass::Cross => "cross",
            ShapeClass::DiagonalStripes => "stripes",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "disk" => Ok(ShapeClass::Disk),
            "square" => Ok(ShapeClass::Square),
            "cross" => Ok(ShapeClass::Cross),
            "stripes" => Ok(ShapeClass::DiagonalStripes),
            other => Err(Error::Parse(format!(
                "unknown shape class {other:?} (expected disk, square, cross or stripes)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub classes: Vec<ShapeClass>,
    pub per_class: usize,
    /// Square image side; channels are fixed at 3.
    pub size: usize,
    /// Amplitude of the uniform per-pixel background jitter.
    pub bg_noise: f64,
    /// Maximum center offset as a fraction of the image side.
    pub jitter_pos: f64,
    /// Shape half-extent range as a fraction of half the image side.
    pub jitter_scale: (f64, f64),
    /// Maximum absolute rotation in radians.
    pub jitter_rot: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: vec![
                ShapeClass::Disk,
                ShapeClass::Square,
                ShapeClass::Cross,
                ShapeClass::DiagonalStripes,
            ],
            per_class: 625,
            size: 32,
            bg_noise: 0.05,
            jitter_pos: 0.12,
            jitter_scale: (0.55, 0.80),
            jitter_rot: 0.5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidArgument("need at least one class".into()));
        }
        if self.per_class == 0 {
            return Err(Error::InvalidArgument("per-class count must be >= 1".into()));
        }
        if self.size < 8 {
            return Err(Error::InvalidArgument(format!(
                "image size must be >= 8, got {}",
                self.size
            )));
        }
        if !(0.0..=0.5).contains(&self.bg_noise) {
            return Err(Error::InvalidArgument(format!(
                "background noise level must lie in [0, 0.5], got {}",
                self.bg_noise
            )));
        }
        let (lo, hi) = self.jitter_scale;
        if !(lo > 0.0 && hi <= 1.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "scale jitter range must satisfy 0 < min <= max <= 1, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

/// Generate the synthetic dataset, grouped by class, deterministic down to
/// the bit for a fixed config. Each sample draws its jitter from its own
/// stream keyed by the global sample index.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let root = RngStream::from_seed(cfg.seed);
    let mut images = Vec::with_capacity(cfg.classes.len() * cfg.per_class);
    let mut labels = Vec::with_capacity(images.capacity());

    for (class_idx, &shape) in cfg.classes.iter().enumerate() {
        for j in 0..cfg.per_class {
            let sample_idx = (class_idx * cfg.per_class + j) as u64;
            let mut stream = root.derive(tags::SYNTH_SAMPLE, sample_idx);
            images.push(render_shape(shape, cfg, &mut stream));
            labels.push(class_idx);
        }
    }

    Dataset::new(
        images,
        labels,
        cfg.classes.iter().map(|c| c.name().to_string()).collect(),
    )
}

fn render_shape(shape: ShapeClass, cfg: &SynthConfig, stream: &mut RngStream) -> Image {
    let size = cfg.size;
    let half = size as f64 / 2.0;

    // Jitter draws, in a fixed documented order.
    let cx = half + cfg.jitter_pos * size as f64 * (2.0 * stream.next_f64() - 1.0);
    let cy = half + cfg.jitter_pos * size as f64 * (2.0 * stream.next_f64() - 1.0);
    let (lo, hi) = cfg.jitter_scale;
    let scale = (lo + (hi - lo) * stream.next_f64()) * half;
    let rot = cfg.jitter_rot * (2.0 * stream.next_f64() - 1.0);
    // Foreground/background contrast is kept moderate on purpose: nets that
    // never trained on distorted inputs should actually degrade under heavy
    // noise instead of averaging their way through it.
    let fg = 0.44 + 0.12 * stream.next_f64();
    let bg_base = 0.16 + 0.08 * stream.next_f64();

    let (sin, cos) = rot.sin_cos();
    let mut data = vec![0.0; size * size * 3];
    for y in 0..size {
        for x in 0..size {
            let dx = (x as f64 + 0.5) - cx;
            let dy = (y as f64 + 0.5) - cy;
            let u = cos * dx + sin * dy;
            let v = -sin * dx + cos * dy;
            let inside = match shape {
                ShapeClass::Disk => u * u + v * v <= scale * scale,
                // side chosen so the square covers the same area as the disk
                ShapeClass::Square => u.abs().max(v.abs()) <= 0.886 * scale,
                ShapeClass::Cross => {
                    (u.abs() <= 0.34 * scale && v.abs() <= 1.05 * scale)
                        || (v.abs() <= 0.34 * scale && u.abs() <= 1.05 * scale)
                }
                ShapeClass::DiagonalStripes => {
                    u.abs().max(v.abs()) <= 0.886 * scale
                        && ((u + v) / (0.55 * scale)).rem_euclid(1.0) < 0.5
                }
            };
            let value = if inside {
                fg
            } else {
                bg_base + cfg.bg_noise * stream.next_f64()
            };
            let base = (y * size + x) * 3;
            data[base] = value;
            data[base + 1] = value;
            data[base + 2] = value;
        }
    }
    Image::new(size, size, 3, data).expect("generated pixels are in range")
}

// ---------------------------------------------------------------------------
// QRDS binary dataset format
// ---------------------------------------------------------------------------
//
// Layout, little-endian throughout:
//
//   magic "QRDS", version u16 (=1), N u32, H u16, W u16, C u8, K u16,
//   K class names (u16 length + UTF-8),
//   N records of (u16 label, H*W*C pixel bytes, row-major,
//   channel-interleaved, byte = round(pixel * 255)).

const QRDS_MAGIC: &[u8; 4] = b"QRDS";
const QRDS_VERSION: u16 = 1;

pub fn encode_qrds(dataset: &Dataset) -> Result<Vec<u8>> {
    let (h, w, c) = dataset
        .dims()
        .ok_or_else(|| Error::InvalidArgument("cannot save an empty dataset".into()))?;
    if dataset.len() > u32::MAX as usize {
        return Err(Error::DimensionOverflow("sample count exceeds u32".into()));
    }
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::DimensionOverflow(format!(
            "image dimensions {h}x{w} exceed u16"
        )));
    }
    if c > u8::MAX as usize {
        return Err(Error::DimensionOverflow(format!("channel count {c} exceeds u8")));
    }
    if dataset.num_classes() > u16::MAX as usize {
        return Err(Error::DimensionOverflow("class count exceeds u16".into()));
    }

    let mut out = Vec::new();
    out.extend_from_slice(QRDS_MAGIC);
    out.extend_from_slice(&QRDS_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_le_bytes());
    out.extend_from_slice(&(h as u16).to_le_bytes());
    out.extend_from_slice(&(w as u16).to_le_bytes());
    out.push(c as u8);
    out.extend_from_slice(&(dataset.num_classes() as u16).to_le_bytes());
    for name in dataset.class_names() {
        if name.len() > u16::MAX as usize {
            return Err(Error::DimensionOverflow(format!("class name {name:?} too long")));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for (image, &label) in dataset.images().iter().zip(dataset.labels()) {
        out.extend_from_slice(&(label as u16).to_le_bytes());
        out.extend(image.data().iter().map(|&p| (p * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn decode_qrds(bytes: &[u8]) -> Result<Dataset> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Truncated(format!(
                "expected {n} bytes for {what} at offset {pos}"
            )));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4, "magic")? != QRDS_MAGIC {
        return Err(Error::BadMagic {
            context: "QRDS",
            expected: "QRDS",
        });
    }
    let version = u16::from_le_bytes(take(&mut pos, 2, "version")?.try_into().unwrap());
    if version != QRDS_VERSION {
        return Err(Error::UnsupportedVersion {
            context: "QRDS",
            found: version,
            expected: QRDS_VERSION,
        });
    }
    let n = u32::from_le_bytes(take(&mut pos, 4, "sample count")?.try_into().unwrap()) as u64;
    let h = u16::from_le_bytes(take(&mut pos, 2, "height")?.try_into().unwrap()) as u64;
    let w = u16::from_le_bytes(take(&mut pos, 2, "width")?.try_into().unwrap()) as u64;
    let c = take(&mut pos, 1, "channels")?[0] as u64;
    let k = u16::from_le_bytes(take(&mut pos, 2, "class count")?.try_into().unwrap()) as usize;
    if h == 0 || w == 0 || c == 0 || k == 0 {
        return Err(Error::Parse("QRDS header has zero dimensions".into()));
    }

    let pixels_per_image = h
        .checked_mul(w)
        .and_then(|p| p.checked_mul(c))
        .ok_or_else(|| Error::DimensionOverflow("image dimensions overflow".into()))?;
    let payload = n
        .checked_mul(pixels_per_image.checked_add(2).unwrap())
        .ok_or_else(|| Error::DimensionOverflow("dataset payload overflows".into()))?;
    if payload > (bytes.len() as u64).saturating_mul(2) && payload > u32::MAX as u64 * 4096 {
        return Err(Error::DimensionOverflow(format!(
            "declared payload of {payload} bytes is implausible"
        )));
    }

    let mut class_names = Vec::with_capacity(k);
    for i in 0..k {
        let len =
            u16::from_le_bytes(take(&mut pos, 2, "class name length")?.try_into().unwrap())
                as usize;
        let raw = take(&mut pos, len, "class name")?;
        class_names.push(
            String::from_utf8(raw.to_vec())
                .map_err(|_| Error::Parse(format!("class name {i} is not valid UTF-8")))?,
        );
    }

    let mut images = Vec::with_capacity(n as usize);
    let mut labels = Vec::with_capacity(n as usize);
    for i in 0..n {
        let label =
            u16::from_le_bytes(take(&mut pos, 2, "label")?.try_into().unwrap()) as usize;
        if label >= k {
            return Err(Error::Parse(format!(
                "record {i}: label {label} out of range for {k} classes"
            )));
        }
        let raw = take(&mut pos, pixels_per_image as usize, "pixel record")?;
        let data: Vec<f64> = raw.iter().map(|&b| b as f64 / 255.0).collect();
        images.push(Image::new(h as usize, w as usize, c as usize, data)?);
        labels.push(label);
    }
    if pos != bytes.len() {
        return Err(Error::Parse(format!(
            "{} trailing bytes after the last record",
            bytes.len() - pos
        )));
    }
    Dataset::new(images, labels, class_names)
}

pub fn save_qrds(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, encode_qrds(dataset)?).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_qrds(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    decode_qrds(&bytes)
}

// ---------------------------------------------------------------------------
// PPM (P6) ingestion
// ---------------------------------------------------------------------------

/// Load a dataset from `root/<class>/<name>.ppm`. Class indices follow the
/// lexicographic order of the subdirectory names; files within a class are
/// read in name order.
pub fn load_ppm_dir(root: &Path) -> Result<Dataset> {
    let mut class_dirs: Vec<_> = fs::read_dir(root)
        .map_err(|e| Error::io(root.display().to_string(), e))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_dir())
        .map(|entry| entry.path())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no class subdirectories",
            root.display()
        )));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    let mut dims: Option<(usize, usize)> = None;

    for (class_idx, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir.display().to_string(), e))?
            .filter_map(|entry| entry.ok())
            .map(|entry| entry.path())
            .filter(|p| {
                p.is_file() && p.extension().map(|e| e == "ppm").unwrap_or(false)
            })
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "class directory {} contains no .ppm files",
                dir.display()
            )));
        }
        class_names.push(
            dir.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for file in files {
            let bytes = fs::read(&file).map_err(|e| Error::io(file.display().to_string(), e))?;
            let image = parse_ppm(&bytes)
                .map_err(|e| Error::Parse(format!("{}: {e}", file.display())))?;
            match dims {
                None => dims = Some((image.height(), image.width())),
                Some((h, w)) if h != image.height() || w != image.width() => {
                    return Err(Error::Parse(format!(
                        "{}: dimensions {}x{} differ from {}x{} seen earlier",
                        file.display(),
                        image.height(),
                        image.width(),
                        h,
                        w
                    )));
                }
                _ => {}
            }
            images.push(image);
            labels.push(class_idx);
        }
    }
    Dataset::new(images, labels, class_names)
}

/// Parse a binary P6 PPM with `maxval <= 255`.
fn parse_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;

    fn skip_space(bytes: &[u8], pos: &mut usize) {
        while *pos < bytes.len() {
            match bytes[*pos] {
                b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
                b'#' => {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_int(bytes: &[u8], pos: &mut usize, what: &str) -> std::result::Result<usize, String> {
        skip_space(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(format!("missing {what} in PPM header"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what} in PPM header"))
    }

    if bytes.len() < 2 || &bytes[0..2] != b"P6" {
        return Err("not a binary P6 PPM".into());
    }
    pos += 2;
    let width = read_int(bytes, &mut pos, "width")?;
    let height = read_int(bytes, &mut pos, "height")?;
    let maxval = read_int(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval} (expected 1..=255)"));
    }
    if pos >= bytes.len() {
        return Err("missing pixel data".into());
    }
    pos += 1; // single whitespace byte after maxval

    let expected = width * height * 3;
    if bytes.len() - pos < expected {
        return Err(format!(
            "pixel data truncated: expected {expected} bytes, found {}",
            bytes.len() - pos
        ));
    }
    let data: Vec<f64> = bytes[pos..pos + expected]
        .iter()
        .map(|&b| (b as f64 / maxval as f64).min(1.0))
        .collect();
    Image::new(height, width, 3, data).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// splitting
// ---------------------------------------------------------------------------

/// Stratified train/test split. Per class, `round(count * test_fraction)`
/// samples (at least 1, at most count-1) go to the test side; the selection
/// is drawn from a per-class stream so it is stable under reordering of
/// other classes.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie strictly between 0 and 1, got {test_fraction}"
        )));
    }
    let root = RngStream::from_seed(seed);
    let k = dataset.num_classes();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &label) in dataset.labels().iter().enumerate() {
        per_class[label].push(i);
    }

    let mut test_indices = Vec::new();
    let mut train_indices = Vec::new();
    for (class_idx, indices) in per_class.iter().enumerate() {
        if indices.is_empty() {
            continue;
        }
        if indices.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "class {} has {} sample(s); need at least 2 to split",
                dataset.class_names()[class_idx],
                indices.len()
            )));
        }
        let n_test = ((indices.len() as f64 * test_fraction).round() as usize)
            .clamp(1, indices.len() - 1);
        let mut shuffled = indices.clone();
        root.derive(tags::SPLIT_CLASS, class_idx as u64)
            .shuffle(&mut shuffled);
        test_indices.extend_from_slice(&shuffled[..n_test]);
        train_indices.extend_from_slice(&shuffled[n_test..]);
    }
    // Keep original dataset order within each part.
    test_indices.sort_unstable();
    train_indices.sort_unstable();

    let subset = |indices: &[usize]| -> Result<Dataset> {
        Dataset::new(
            indices.iter().map(|&i| dataset.images()[i].clone()).collect(),
            indices.iter().map(|&i| dataset.labels()[i]).collect(),
            dataset.class_names().to_vec(),
        )
    };
    Ok((subset(&train_indices)?, subset(&test_indices)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SynthConfig {
        SynthConfig {
            per_class: 12,
            size: 16,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn generation_is_bitwise_deterministic() {
        let cfg = small_cfg();
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert!(a.bits_eq(&b));
        let c = generate_synthetic(&SynthConfig {
            seed: 8,
            ..small_cfg()
        })
        .unwrap();
        assert!(!a.bits_eq(&c));
    }

    #[test]
    fn generation_is_exactly_balanced() {
        let cfg = SynthConfig {
            per_class: 500,
            size: 8,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.len(), 2000);
        for class in 0..4 {
            assert_eq!(ds.labels().iter().filter(|&&l| l == class).count(), 500);
        }
        assert_eq!(
            ds.class_names(),
            &["disk", "square", "cross", "stripes"]
        );
    }

    #[test]
    fn shapes_differ_between_classes() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        // mean intensity separates foreground coverage enough that images of
        // different classes cannot be identical
        let a = &ds.images()[0];
        let b = &ds.images()[ds.len() - 1];
        assert!(!a.bits_eq(b));
    }

    #[test]
    fn qrds_round_trip_within_quantization() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let bytes = encode_qrds(&ds).unwrap();
        let loaded = decode_qrds(&bytes).unwrap();
        assert_eq!(loaded.labels(), ds.labels());
        assert_eq!(loaded.class_names(), ds.class_names());
        for (a, b) in loaded.images().iter().zip(ds.images()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1.0 / 510.0 + 1e-12, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn qrds_is_idempotent_after_first_quantization() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let bytes1 = encode_qrds(&ds).unwrap();
        let once = decode_qrds(&bytes1).unwrap();
        let bytes2 = encode_qrds(&once).unwrap();
        let twice = decode_qrds(&bytes2).unwrap();
        assert!(once.bits_eq(&twice));
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn qrds_bad_magic() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let mut bytes = encode_qrds(&ds).unwrap();
        bytes[0] = b'Z';
        assert!(matches!(
            decode_qrds(&bytes),
            Err(Error::BadMagic { context: "QRDS", .. })
        ));
    }

    #[test]
    fn qrds_truncated() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let bytes = encode_qrds(&ds).unwrap();
        assert!(matches!(
            decode_qrds(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(decode_qrds(&bytes[..6]), Err(Error::Truncated(_))));
    }

    #[test]
    fn qrds_dimension_overflow() {
        // Header declaring u32::MAX samples of 65535x65535x255 pixels.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(QRDS_MAGIC);
        bytes.extend_from_slice(&QRDS_VERSION.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u16::MAX.to_le_bytes());
        bytes.extend_from_slice(&u16::MAX.to_le_bytes());
        bytes.push(255);
        bytes.extend_from_slice(&1u16.to_le_bytes());
        assert!(matches!(
            decode_qrds(&bytes),
            Err(Error::DimensionOverflow(_))
        ));
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let cfg = SynthConfig {
            per_class: 500,
            size: 8,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        let (train, test) = split(&ds, 0.25, 3).unwrap();
        assert_eq!(train.len(), 1500);
        assert_eq!(test.len(), 500);
        for class in 0..4 {
            assert_eq!(train.labels().iter().filter(|&&l| l == class).count(), 375);
            assert_eq!(test.labels().iter().filter(|&&l| l == class).count(), 125);
        }
        let (train2, test2) = split(&ds, 0.25, 3).unwrap();
        assert!(train.bits_eq(&train2));
        assert!(test.bits_eq(&test2));
        let (train3, _) = split(&ds, 0.25, 4).unwrap();
        assert!(!train.bits_eq(&train3));
    }

    #[test]
    fn split_partitions_without_overlap() {
        let ds = generate_synthetic(&small_cfg()).unwrap();
        let (train, test) = split(&ds, 0.25, 0).unwrap();
        assert_eq!(train.len() + test.len(), ds.len());
        // Count multiset membership by pixel bits of the first pixel plus
        // label; with per-sample jitter these are unique in practice.
        let key = |img: &Image, label: usize| (img.data()[0].to_bits(), label);
        let mut seen: std::collections::HashSet<_> = std::collections::HashSet::new();
        for (img, &l) in train.images().iter().zip(train.labels()) {
            seen.insert(key(img, l));
        }
        for (img, &l) in test.images().iter().zip(test.labels()) {
            assert!(!seen.contains(&key(img, l)), "sample leaked across split");
        }
    }

    #[test]
    fn split_edge_cases() {
        let ds = generate_synthetic(&SynthConfig {
            per_class: 2,
            size: 8,
            ..SynthConfig::default()
        })
        .unwrap();
        let (train, test) = split(&ds, 0.5, 1).unwrap();
        for class in 0..4 {
            assert_eq!(train.labels().iter().filter(|&&l| l == class).count(), 1);
            assert_eq!(test.labels().iter().filter(|&&l| l == class).count(), 1);
        }
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());

        let tiny = Dataset::new(
            vec![Image::filled(8, 8, 1, 0.5).unwrap(); 3],
            vec![0, 0, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        assert!(split(&tiny, 0.5, 1).is_err(), "class with 1 sample must fail");
    }

    #[test]
    fn ppm_directory_loading() {
        let dir = tempfile::tempdir().unwrap();
        let write_ppm = |class: &str, name: &str, w: usize, h: usize, value: u8, maxval: u32| {
            let class_dir = dir.path().join(class);
            fs::create_dir_all(&class_dir).unwrap();
            let mut bytes = format!("P6\n# test image\n{w} {h}\n{maxval}\n").into_bytes();
            bytes.extend(std::iter::repeat(value).take(w * h * 3));
            fs::write(class_dir.join(name), bytes).unwrap();
        };
        write_ppm("b", "x.ppm", 4, 2, 255, 255);
        write_ppm("a", "y.ppm", 4, 2, 128, 255);

        let ds = load_ppm_dir(dir.path()).unwrap();
        assert_eq!(ds.class_names(), &["a", "b"]);
        assert_eq!(ds.labels(), &[0, 1]);
        // maxval 255, byte 255 -> exactly 1.0
        assert_eq!(ds.images()[1].data()[0], 1.0);
        assert!((ds.images()[0].data()[0] - 128.0 / 255.0).abs() < 1e-12);

        // mismatched dimensions are rejected, naming the offending file
        write_ppm("a", "z.ppm", 3, 2, 10, 255);
        let err = load_ppm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("z.ppm"), "error should name the file: {err}");
    }

    #[test]
    fn ppm_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let class_dir = dir.path().join("only");
        fs::create_dir_all(&class_dir).unwrap();
        // empty class dir
        let err = load_ppm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("no .ppm files"), "{err}");
        // non-P6 header
        fs::write(class_dir.join("bad.ppm"), b"P3\n1 1\n255\n0 0 0\n").unwrap();
        let err = load_ppm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("P6"), "{err}");
        // truncated payload
        fs::write(class_dir.join("bad.ppm"), b"P6\n2 2\n255\nxx").unwrap();
        let err = load_ppm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
        // 16-bit maxval unsupported
        fs::write(class_dir.join("bad.ppm"), b"P6\n1 1\n65535\naabbcc").unwrap();
        let err = load_ppm_dir(dir.path()).unwrap_err().to_string();
        assert!(err.contains("maxval"), "{err}");
    }
}
