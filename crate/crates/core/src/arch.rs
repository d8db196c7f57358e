//! Classifier architecture descriptors and parameter containers.
//!
//! An [`Architecture`] is a flat layer list with a canonical text form (the
//! descriptor) that is embedded in weight files, so a parameter set can be
//! validated against the net it was trained for. The default net is a small
//! two-conv CNN sized for 32x32 inputs.

use crate::error::{Error, Result};
use crate::rng::{tags, RngStream};
use crate::tensor::{shape_string, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// 2-D convolution with square odd kernel and explicit zero padding.
    Conv {
        out_channels: usize,
        kernel: usize,
        pad: usize,
    },
    Relu,
    /// Non-overlapping max pooling with square window `size` and stride `size`.
    MaxPool { size: usize },
    Flatten,
    Dense { out_features: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// The default desk-scale CNN:
    /// conv3x3 (C->8) / relu / pool2 / conv3x3 (8->16) / relu / pool2 /
    /// flatten / dense -> num_classes.
    pub fn default_cnn(
        in_channels: usize,
        in_height: usize,
        in_width: usize,
        num_classes: usize,
    ) -> Result<Self> {
        let arch = Architecture {
            in_channels,
            in_height,
            in_width,
            layers: vec![
                LayerSpec::Conv {
                    out_channels: 8,
                    kernel: 3,
                    pad: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Conv {
                    out_channels: 16,
                    kernel: 3,
                    pad: 1,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    out_features: num_classes,
                },
            ],
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Walk the layer list and check it forms a valid net: positive input
    /// dims, odd conv kernels, pools that divide the spatial size, exactly
    /// one flatten, and a final dense layer.
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.in_height == 0 || self.in_width == 0 {
            return Err(Error::InvalidArgument(format!(
                "input dimensions must be positive, got {}x{}x{}",
                self.in_channels, self.in_height, self.in_width
            )));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("architecture has no layers".into()));
        }
        let mut shape = FeatureShape::Spatial {
            c: self.in_channels,
            h: self.in_height,
            w: self.in_width,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            shape = step_shape(shape, layer)
                .map_err(|e| Error::InvalidArgument(format!("layer {i}: {e}")))?;
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { .. }) => Ok(()),
            _ => Err(Error::InvalidArgument(
                "architecture must end with a dense layer".into(),
            )),
        }
    }

    /// Number of output classes (the final dense width).
    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { out_features }) => *out_features,
            _ => unreachable!("validated architectures end with dense"),
        }
    }

    /// Feature shape entering each layer, plus the final output width.
    pub(crate) fn shapes(&self) -> Vec<FeatureShape> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut shape = FeatureShape::Spatial {
            c: self.in_channels,
            h: self.in_height,
            w: self.in_width,
        };
        shapes.push(shape);
        for layer in &self.layers {
            shape = step_shape(shape, layer).expect("validated architecture");
            shapes.push(shape);
        }
        shapes
    }

    /// Canonical descriptor text, e.g.
    /// `input:3x32x32|conv:8,k3,p1|relu|pool:2|conv:16,k3,p1|relu|pool:2|flatten|dense:4`.
    pub fn descriptor(&self) -> String {
        let mut parts = vec![format!(
            "input:{}x{}x{}",
            self.in_channels, self.in_height, self.in_width
        )];
        for layer in &self.layers {
            parts.push(match layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    pad,
                } => format!("conv:{out_channels},k{kernel},p{pad}"),
                LayerSpec::Relu => "relu".to_string(),
                LayerSpec::MaxPool { size } => format!("pool:{size}"),
                LayerSpec::Flatten => "flatten".to_string(),
                LayerSpec::Dense { out_features } => format!("dense:{out_features}"),
            });
        }
        parts.join("|")
    }

    pub fn parse(descriptor: &str) -> Result<Self> {
        let mut parts = descriptor.split('|');
        let input = parts
            .next()
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Parse("empty architecture descriptor".into()))?;
        let dims = input
            .strip_prefix("input:")
            .ok_or_else(|| Error::Parse(format!("descriptor must start with input:, got {input:?}")))?;
        let dims: Vec<usize> = dims
            .split('x')
            .map(|d| {
                d.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad input dimension {d:?}")))
            })
            .collect::<Result<_>>()?;
        if dims.len() != 3 {
            return Err(Error::Parse(format!(
                "input must be CxHxW, got {input:?}"
            )));
        }
        let mut layers = Vec::new();
        for part in parts {
            layers.push(parse_layer(part)?);
        }
        let arch = Architecture {
            in_channels: dims[0],
            in_height: dims[1],
            in_width: dims[2],
            layers,
        };
        arch.validate()?;
        Ok(arch)
    }
}

fn parse_layer(part: &str) -> Result<LayerSpec> {
    match part {
        "relu" => return Ok(LayerSpec::Relu),
        "flatten" => return Ok(LayerSpec::Flatten),
        _ => {}
    }
    if let Some(rest) = part.strip_prefix("conv:") {
        let fields: Vec<&str> = rest.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!(
                "conv layer must be conv:OUT,kK,pP, got {part:?}"
            )));
        }
        let out_channels = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad conv width {:?}", fields[0])))?;
        let kernel = fields[1]
            .strip_prefix('k')
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad conv kernel {:?}", fields[1])))?;
        let pad = fields[2]
            .strip_prefix('p')
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad conv padding {:?}", fields[2])))?;
        return Ok(LayerSpec::Conv {
            out_channels,
            kernel,
            pad,
        });
    }
    if let Some(size) = part.strip_prefix("pool:") {
        let size = size
            .parse()
            .map_err(|_| Error::Parse(format!("bad pool size {size:?}")))?;
        return Ok(LayerSpec::MaxPool { size });
    }
    if let Some(out) = part.strip_prefix("dense:") {
        let out_features = out
            .parse()
            .map_err(|_| Error::Parse(format!("bad dense width {out:?}")))?;
        return Ok(LayerSpec::Dense { out_features });
    }
    Err(Error::Parse(format!("unknown layer {part:?}")))
}

/// Shape of the feature map flowing between layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum FeatureShape {
    Spatial { c: usize, h: usize, w: usize },
    Flat { features: usize },
}

fn step_shape(shape: FeatureShape, layer: &LayerSpec) -> std::result::Result<FeatureShape, String> {
    match (shape, layer) {
        (
            FeatureShape::Spatial { c: _, h, w },
            LayerSpec::Conv {
                out_channels,
                kernel,
                pad,
            },
        ) => {
            if *out_channels == 0 {
                return Err("conv width must be positive".into());
            }
            if *kernel == 0 || kernel % 2 == 0 {
                return Err(format!("conv kernel must be odd and positive, got {kernel}"));
            }
            let span = kernel - 1;
            if h + 2 * pad < span + 1 || w + 2 * pad < span + 1 {
                return Err(format!(
                    "conv kernel {kernel} too large for {h}x{w} input with pad {pad}"
                ));
            }
            Ok(FeatureShape::Spatial {
                c: *out_channels,
                h: h + 2 * pad - span,
                w: w + 2 * pad - span,
            })
        }
        (s @ FeatureShape::Spatial { .. }, LayerSpec::Relu) => Ok(s),
        (s @ FeatureShape::Flat { .. }, LayerSpec::Relu) => Ok(s),
        (FeatureShape::Spatial { c, h, w }, LayerSpec::MaxPool { size }) => {
            if *size == 0 {
                return Err("pool size must be positive".into());
            }
            if h % size != 0 || w % size != 0 {
                return Err(format!("pool size {size} must divide {h}x{w}"));
            }
            Ok(FeatureShape::Spatial {
                c,
                h: h / size,
                w: w / size,
            })
        }
        (FeatureShape::Spatial { c, h, w }, LayerSpec::Flatten) => Ok(FeatureShape::Flat {
            features: c * h * w,
        }),
        (FeatureShape::Flat { features }, LayerSpec::Dense { out_features }) => {
            if *out_features == 0 {
                return Err("dense width must be positive".into());
            }
            let _ = features;
            Ok(FeatureShape::Flat {
                features: *out_features,
            })
        }
        (FeatureShape::Flat { .. }, l) => Err(format!("layer {l:?} cannot follow flatten")),
        (FeatureShape::Spatial { .. }, LayerSpec::Dense { .. }) => {
            Err("dense layer requires flatten first".into())
        }
    }
}

/// A named parameter tensor with a stable position in the parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// The full trainable state of a classifier: an architecture plus one tensor
/// per parameter, in deterministic layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    tensors: Vec<NamedTensor>,
}

impl ModelParams {
    /// Seeded fan-in-scaled uniform initialization: weights drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, biases zero.
    pub fn init(arch: &Architecture, stream: &RngStream) -> Result<Self> {
        arch.validate()?;
        let mut init_stream = stream.derive(tags::PARAM_INIT, 0);
        let mut tensors = Vec::new();
        for (index, shape, fan_in) in parameter_layout(arch) {
            let data = if index.ends_with(".bias") {
                vec![0.0; shape.iter().product()]
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..shape.iter().product())
                    .map(|_| (init_stream.next_f64() * 2.0 - 1.0) * bound)
                    .collect()
            };
            tensors.push(NamedTensor {
                name: index,
                tensor: Tensor::new(shape, data)?,
            });
        }
        Ok(ModelParams {
            arch: arch.clone(),
            tensors,
        })
    }

    /// Rebuild params from named tensors (e.g. loaded from a weight file),
    /// checking names, order, and shapes against the architecture.
    pub fn from_named_tensors(arch: &Architecture, tensors: Vec<NamedTensor>) -> Result<Self> {
        arch.validate()?;
        let layout = parameter_layout(arch);
        if layout.len() != tensors.len() {
            return Err(Error::shape(
                "parameter list",
                format!("{} tensors", layout.len()),
                format!("{} tensors", tensors.len()),
            ));
        }
        for ((name, shape, _), actual) in layout.iter().zip(tensors.iter()) {
            if *name != actual.name {
                return Err(Error::Parse(format!(
                    "parameter name mismatch: expected {name:?}, got {:?}",
                    actual.name
                )));
            }
            if shape != actual.tensor.shape() {
                return Err(Error::shape(
                    format!("parameter {name}"),
                    shape_string(shape),
                    shape_string(actual.tensor.shape()),
                ));
            }
            if !actual.tensor.all_finite() {
                return Err(Error::InvalidArgument(format!(
                    "parameter {name} contains non-finite values"
                )));
            }
        }
        Ok(ModelParams {
            arch: arch.clone(),
            tensors,
        })
    }

    #[inline]
    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    #[inline]
    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    #[inline]
    pub(crate) fn tensors_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.tensors
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.tensor.numel()).sum()
    }

    pub fn bits_eq(&self, other: &ModelParams) -> bool {
        self.arch == other.arch
            && self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|(a, b)| a.name == b.name && a.tensor.bits_eq(&b.tensor))
    }
}

/// Expected `(name, shape, fan_in)` for every parameter tensor, in layer order.
fn parameter_layout(arch: &Architecture) -> Vec<(String, Vec<usize>, usize)> {
    let shapes = arch.shapes();
    let mut layout = Vec::new();
    let mut conv_idx = 0;
    let mut dense_idx = 0;
    for (layer, shape_in) in arch.layers.iter().zip(shapes.iter()) {
        match (layer, shape_in) {
            (
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                    ..
                },
                FeatureShape::Spatial { c, .. },
            ) => {
                conv_idx += 1;
                let fan_in = c * kernel * kernel;
                layout.push((
                    format!("conv{conv_idx}.weight"),
                    vec![*out_channels, *c, *kernel, *kernel],
                    fan_in,
                ));
                layout.push((format!("conv{conv_idx}.bias"), vec![*out_channels], fan_in));
            }
            (LayerSpec::Dense { out_features }, FeatureShape::Flat { features }) => {
                dense_idx += 1;
                layout.push((
                    format!("dense{dense_idx}.weight"),
                    vec![*out_features, *features],
                    *features,
                ));
                layout.push((
                    format!("dense{dense_idx}.bias"),
                    vec![*out_features],
                    *features,
                ));
            }
            _ => {}
        }
    }
    layout
}
