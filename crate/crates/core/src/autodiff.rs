//! Forward evaluation with a reverse-mode gradient tape.
//!
//! `model_forward` runs the classifier over a batch and records, per layer,
//! exactly the intermediates one backward pass needs. `loss_softmax_ce_on_tape`
//! seeds the tape with the loss gradient, and `backward` replays the layers in
//! reverse to produce one gradient tensor per parameter tensor.

use crate::arch::{Architecture, LayerSpec, ModelParams};
use crate::error::{Error, Result};
use crate::rng::{tags, RngStream};
use crate::tensor::{shape_string, Tensor};

/// Per-layer record of whatever backward needs.
#[derive(Debug)]
enum LayerRecord {
    Conv { input: Tensor },
    Relu { input: Tensor },
    MaxPool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Flatten { in_shape: Vec<usize> },
    Dense { input: Tensor },
}

/// Recorded forward pass. One tape supports exactly one backward pass.
#[derive(Debug)]
pub struct Tape {
    records: Vec<LayerRecord>,
    loss_grad: Option<Tensor>,
    consumed: bool,
}

impl Tape {
    pub fn has_loss(&self) -> bool {
        self.loss_grad.is_some()
    }
}

/// Gradients aligned one-to-one with `ModelParams::tensors()`.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            tensors: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.tensor.shape().to_vec()))
                .collect(),
        }
    }
}

/// Run the classifier over `batch` (shape `[N, C, H, W]`), returning logits
/// `[N, K]` and the tape for a later backward pass.
pub fn model_forward(params: &ModelParams, batch: &Tensor) -> Result<(Tensor, Tape)> {
    let arch = params.arch();
    check_batch_shape(arch, batch)?;

    let mut current = batch.clone();
    let mut records = Vec::with_capacity(arch.layers.len());
    let mut param_idx = 0;

    for layer in &arch.layers {
        match layer {
            LayerSpec::Conv { kernel, pad, .. } => {
                let weight = &params.tensors()[param_idx].tensor;
                let bias = &params.tensors()[param_idx + 1].tensor;
                param_idx += 2;
                let out = conv_forward(&current, weight, bias, *kernel, *pad);
                records.push(LayerRecord::Conv { input: current });
                current = out;
            }
            LayerSpec::Relu => {
                let mut out = current.clone();
                for v in out.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                records.push(LayerRecord::Relu { input: current });
                current = out;
            }
            LayerSpec::MaxPool { size } => {
                let (out, argmax) = maxpool_forward(&current, *size);
                records.push(LayerRecord::MaxPool {
                    in_shape: current.shape().to_vec(),
                    argmax,
                });
                current = out;
            }
            LayerSpec::Flatten => {
                let shape = current.shape().to_vec();
                let flat = shape[1] * shape[2] * shape[3];
                let out = Tensor::new(vec![shape[0], flat], current.data().to_vec())?;
                records.push(LayerRecord::Flatten { in_shape: shape });
                current = out;
            }
            LayerSpec::Dense { .. } => {
                let weight = &params.tensors()[param_idx].tensor;
                let bias = &params.tensors()[param_idx + 1].tensor;
                param_idx += 2;
                let out = dense_forward(&current, weight, bias);
                records.push(LayerRecord::Dense { input: current });
                current = out;
            }
        }
    }

    if !current.all_finite() {
        return Err(Error::InvalidArgument(
            "forward pass produced non-finite logits".into(),
        ));
    }
    Ok((
        current,
        Tape {
            records,
            loss_grad: None,
            consumed: false,
        },
    ))
}

fn check_batch_shape(arch: &Architecture, batch: &Tensor) -> Result<()> {
    let s = batch.shape();
    let expected = [arch.in_channels, arch.in_height, arch.in_width];
    if s.len() != 4 || s[1] != expected[0] || s[2] != expected[1] || s[3] != expected[2] {
        return Err(Error::shape(
            "model input batch",
            format!("Nx{}", shape_string(&expected)),
            shape_string(s),
        ));
    }
    Ok(())
}

/// Mean softmax cross-entropy over rows. Targets must be `[N, K]` with each
/// row a probability vector (sum within 1e-9 of one).
pub fn loss_softmax_ce(logits: &Tensor, targets: &Tensor) -> Result<f64> {
    let (loss, _) = loss_and_grad(logits, targets)?;
    Ok(loss)
}

/// Like [`loss_softmax_ce`] but also stores the loss gradient on the tape so
/// `backward` can run.
pub fn loss_softmax_ce_on_tape(tape: &mut Tape, logits: &Tensor, targets: &Tensor) -> Result<f64> {
    let (loss, grad) = loss_and_grad(logits, targets)?;
    tape.loss_grad = Some(grad);
    Ok(loss)
}

fn loss_and_grad(logits: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 {
        return Err(Error::shape("loss logits", "NxK", shape_string(logits.shape())));
    }
    if logits.shape() != targets.shape() {
        return Err(Error::shape(
            "loss targets",
            shape_string(logits.shape()),
            shape_string(targets.shape()),
        ));
    }
    let n = logits.shape()[0];
    let k = logits.shape()[1];
    let z = logits.data();
    let t = targets.data();

    for row in 0..n {
        let row_slice = &t[row * k..(row + 1) * k];
        if row_slice.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "target row {row} has negative or non-finite entries"
            )));
        }
        let sum: f64 = row_slice.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "target row {row} sums to {sum}, expected 1 within 1e-9"
            )));
        }
    }

    let mut grad = vec![0.0; n * k];
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for row in 0..n {
        let zs = &z[row * k..(row + 1) * k];
        let ts = &t[row * k..(row + 1) * k];
        let max = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for &v in zs {
            sum_exp += (v - max).exp();
        }
        let log_sum = sum_exp.ln();
        // -sum_k t_k * (z_k - max - log_sum), grouped so uniform logits give
        // exactly ln(K) * sum(t).
        let mut dot = 0.0;
        let mut t_sum = 0.0;
        for i in 0..k {
            dot += ts[i] * (zs[i] - max);
            t_sum += ts[i];
        }
        total += log_sum * t_sum - dot;
        for i in 0..k {
            let softmax = (zs[i] - max).exp() / sum_exp;
            grad[row * k + i] = (softmax - ts[i]) * inv_n;
        }
    }
    Ok((total * inv_n, Tensor::new(vec![n, k], grad)?))
}

/// Reverse pass over a prepared tape. Fails if no loss gradient was recorded
/// or if the tape was already consumed.
pub fn backward(tape: &mut Tape, params: &ModelParams) -> Result<Gradients> {
    if tape.consumed {
        return Err(Error::TapeConsumed);
    }
    let mut d_out = match &tape.loss_grad {
        Some(g) => g.clone(),
        None => return Err(Error::TapeUnprepared),
    };
    tape.consumed = true;

    let arch = params.arch();
    if tape.records.len() != arch.layers.len() {
        return Err(Error::InvalidArgument(
            "tape does not match the given parameters".into(),
        ));
    }

    let mut grads = Gradients::zeros_like(params);
    // Index of the first parameter tensor of each parameterized layer,
    // walked backwards alongside the records.
    let mut param_idx = params.tensors().len();

    for (layer, record) in arch.layers.iter().zip(tape.records.iter()).rev() {
        match (layer, record) {
            (LayerSpec::Dense { .. }, LayerRecord::Dense { input }) => {
                param_idx -= 2;
                let weight = &params.tensors()[param_idx].tensor;
                let (dw, db, d_in) = dense_backward(input, weight, &d_out);
                grads.tensors[param_idx] = dw;
                grads.tensors[param_idx + 1] = db;
                d_out = d_in;
            }
            (LayerSpec::Flatten, LayerRecord::Flatten { in_shape }) => {
                d_out = Tensor::new(in_shape.clone(), d_out.data().to_vec())?;
            }
            (LayerSpec::MaxPool { .. }, LayerRecord::MaxPool { in_shape, argmax }) => {
                let mut d_in = Tensor::zeros(in_shape.clone());
                let data = d_in.data_mut();
                for (out_idx, &in_idx) in argmax.iter().enumerate() {
                    data[in_idx] += d_out.data()[out_idx];
                }
                d_out = d_in;
            }
            (LayerSpec::Relu, LayerRecord::Relu { input }) => {
                let mut d_in = d_out.clone();
                for (g, &x) in d_in.data_mut().iter_mut().zip(input.data()) {
                    if x <= 0.0 {
                        *g = 0.0;
                    }
                }
                d_out = d_in;
            }
            (LayerSpec::Conv { kernel, pad, .. }, LayerRecord::Conv { input }) => {
                param_idx -= 2;
                let weight = &params.tensors()[param_idx].tensor;
                let (dw, db, d_in) = conv_backward(input, weight, &d_out, *kernel, *pad);
                grads.tensors[param_idx] = dw;
                grads.tensors[param_idx + 1] = db;
                d_out = d_in;
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "tape does not match the given parameters".into(),
                ))
            }
        }
    }
    Ok(grads)
}

// ---------------------------------------------------------------------------
// layer kernels
// ---------------------------------------------------------------------------

fn pad_plane(src: &[f64], h: usize, w: usize, pad: usize, dst: &mut [f64]) {
    let wp = w + 2 * pad;
    dst.fill(0.0);
    for y in 0..h {
        let src_row = &src[y * w..(y + 1) * w];
        let dst_row = &mut dst[(y + pad) * wp + pad..(y + pad) * wp + pad + w];
        dst_row.copy_from_slice(src_row);
    }
}

fn conv_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, k: usize, pad: usize) -> Tensor {
    let (n, cin, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let cout = weight.shape()[0];
    let ho = h + 2 * pad - (k - 1);
    let wo = w + 2 * pad - (k - 1);
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);

    let mut out = Tensor::zeros(vec![n, cout, ho, wo]);
    let x = input.data();
    let wt = weight.data();
    let b = bias.data();
    let mut padded = vec![0.0; cin * hp * wp];

    for ni in 0..n {
        for ci in 0..cin {
            pad_plane(
                &x[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w],
                h,
                w,
                pad,
                &mut padded[ci * hp * wp..(ci + 1) * hp * wp],
            );
        }
        for co in 0..cout {
            let out_plane =
                &mut out.data_mut()[(ni * cout + co) * ho * wo..(ni * cout + co + 1) * ho * wo];
            out_plane.fill(b[co]);
            for ci in 0..cin {
                let plane = &padded[ci * hp * wp..(ci + 1) * hp * wp];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = wt[((co * cin + ci) * k + ky) * k + kx];
                        for y in 0..ho {
                            let src = &plane[(y + ky) * wp + kx..(y + ky) * wp + kx + wo];
                            let dst = &mut out_plane[y * wo..(y + 1) * wo];
                            for xo in 0..wo {
                                dst[xo] += wv * src[xo];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    input: &Tensor,
    weight: &Tensor,
    d_out: &Tensor,
    k: usize,
    pad: usize,
) -> (Tensor, Tensor, Tensor) {
    let (n, cin, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let cout = weight.shape()[0];
    let (ho, wo) = (d_out.shape()[2], d_out.shape()[3]);
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);

    let x = input.data();
    let wt = weight.data();
    let g = d_out.data();

    let mut dw = Tensor::zeros(weight.shape().to_vec());
    let mut db = Tensor::zeros(vec![cout]);
    let mut d_in = Tensor::zeros(input.shape().to_vec());
    let mut padded = vec![0.0; cin * hp * wp];
    let mut d_padded = vec![0.0; cin * hp * wp];

    for ni in 0..n {
        for ci in 0..cin {
            pad_plane(
                &x[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w],
                h,
                w,
                pad,
                &mut padded[ci * hp * wp..(ci + 1) * hp * wp],
            );
        }
        d_padded.fill(0.0);

        for co in 0..cout {
            let g_plane = &g[(ni * cout + co) * ho * wo..(ni * cout + co + 1) * ho * wo];
            db.data_mut()[co] += g_plane.iter().sum::<f64>();
            for ci in 0..cin {
                let plane = &padded[ci * hp * wp..(ci + 1) * hp * wp];
                let d_plane = &mut d_padded[ci * hp * wp..(ci + 1) * hp * wp];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((co * cin + ci) * k + ky) * k + kx;
                        let wv = wt[widx];
                        let mut acc = 0.0;
                        for y in 0..ho {
                            let g_row = &g_plane[y * wo..(y + 1) * wo];
                            let x_row = &plane[(y + ky) * wp + kx..(y + ky) * wp + kx + wo];
                            let d_row =
                                &mut d_plane[(y + ky) * wp + kx..(y + ky) * wp + kx + wo];
                            for xo in 0..wo {
                                acc += g_row[xo] * x_row[xo];
                                d_row[xo] += wv * g_row[xo];
                            }
                        }
                        dw.data_mut()[widx] += acc;
                    }
                }
            }
        }

        // Crop the padded input gradient back to the original plane.
        for ci in 0..cin {
            let d_plane = &d_padded[ci * hp * wp..(ci + 1) * hp * wp];
            let dst =
                &mut d_in.data_mut()[(ni * cin + ci) * h * w..(ni * cin + ci + 1) * h * w];
            for y in 0..h {
                let src_row = &d_plane[(y + pad) * wp + pad..(y + pad) * wp + pad + w];
                dst[y * w..(y + 1) * w].copy_from_slice(src_row);
            }
        }
    }
    (dw, db, d_in)
}

fn maxpool_forward(input: &Tensor, size: usize) -> (Tensor, Vec<usize>) {
    let (n, c, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (ho, wo) = (h / size, w / size);
    let mut out = Tensor::zeros(vec![n, c, ho, wo]);
    let mut argmax = vec![0usize; n * c * ho * wo];
    let x = input.data();

    for plane_idx in 0..n * c {
        let base = plane_idx * h * w;
        for yo in 0..ho {
            for xo in 0..wo {
                let mut best_idx = base + (yo * size) * w + xo * size;
                let mut best = x[best_idx];
                for dy in 0..size {
                    for dx in 0..size {
                        let idx = base + (yo * size + dy) * w + xo * size + dx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let out_idx = plane_idx * ho * wo + yo * wo + xo;
                out.data_mut()[out_idx] = best;
                argmax[out_idx] = best_idx;
            }
        }
    }
    (out, argmax)
}

fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let (n, f) = (input.shape()[0], input.shape()[1]);
    let k = weight.shape()[0];
    let mut out = Tensor::zeros(vec![n, k]);
    let x = input.data();
    let wt = weight.data();
    let b = bias.data();
    for ni in 0..n {
        let row = &x[ni * f..(ni + 1) * f];
        let out_row = &mut out.data_mut()[ni * k..(ni + 1) * k];
        for o in 0..k {
            let w_row = &wt[o * f..(o + 1) * f];
            let mut acc = b[o];
            for i in 0..f {
                acc += w_row[i] * row[i];
            }
            out_row[o] = acc;
        }
    }
    out
}

fn dense_backward(input: &Tensor, weight: &Tensor, d_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, f) = (input.shape()[0], input.shape()[1]);
    let k = weight.shape()[0];
    let x = input.data();
    let wt = weight.data();
    let g = d_out.data();

    let mut dw = Tensor::zeros(vec![k, f]);
    let mut db = Tensor::zeros(vec![k]);
    let mut d_in = Tensor::zeros(vec![n, f]);

    for ni in 0..n {
        let x_row = &x[ni * f..(ni + 1) * f];
        let g_row = &g[ni * k..(ni + 1) * k];
        let d_in_row = &mut d_in.data_mut()[ni * f..(ni + 1) * f];
        for o in 0..k {
            let gv = g_row[o];
            db.data_mut()[o] += gv;
            let dw_row = &mut dw.data_mut()[o * f..(o + 1) * f];
            let w_row = &wt[o * f..(o + 1) * f];
            for i in 0..f {
                dw_row[i] += gv * x_row[i];
                d_in_row[i] += gv * w_row[i];
            }
        }
    }
    (dw, db, d_in)
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

/// Maximum relative disagreement between analytic gradients and central
/// finite differences over a deterministic sample of parameters (up to eight
/// per tensor).
pub fn grad_check(
    params: &ModelParams,
    batch: &Tensor,
    targets: &Tensor,
    epsilon: f64,
) -> Result<f64> {
    let analytic = {
        let (logits, mut tape) = model_forward(params, batch)?;
        loss_softmax_ce_on_tape(&mut tape, &logits, targets)?;
        backward(&mut tape, params)?
    };
    let indices = sample_indices(params, 8);
    grad_check_against(params, batch, targets, epsilon, &analytic, &indices)
}

/// Compare the supplied analytic gradients against central differences at the
/// given `(tensor, element)` indices. Exposed separately so the checker
/// itself can be exercised against deliberately corrupted gradients.
pub fn grad_check_against(
    params: &ModelParams,
    batch: &Tensor,
    targets: &Tensor,
    epsilon: f64,
    analytic: &Gradients,
    indices: &[(usize, usize)],
) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!(
            "epsilon {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let mut probe = params.clone();
    let mut max_err: f64 = 0.0;
    for &(ti, ei) in indices {
        let original = probe.tensors()[ti].tensor.data()[ei];

        probe.tensors_mut()[ti].tensor.data_mut()[ei] = original + epsilon;
        let loss_plus = forward_loss(&probe, batch, targets)?;
        probe.tensors_mut()[ti].tensor.data_mut()[ei] = original - epsilon;
        let loss_minus = forward_loss(&probe, batch, targets)?;
        probe.tensors_mut()[ti].tensor.data_mut()[ei] = original;

        let numeric = (loss_plus - loss_minus) / (2.0 * epsilon);
        let a = analytic.tensors[ti].data()[ei];
        let err = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

fn forward_loss(params: &ModelParams, batch: &Tensor, targets: &Tensor) -> Result<f64> {
    let (logits, _) = model_forward(params, batch)?;
    loss_softmax_ce(&logits, targets)
}

fn sample_indices(params: &ModelParams, per_tensor: usize) -> Vec<(usize, usize)> {
    let mut stream = RngStream::from_seed(0x6772_6164).derive(tags::GRAD_CHECK, 0);
    let mut indices = Vec::new();
    for (ti, named) in params.tensors().iter().enumerate() {
        let numel = named.tensor.numel();
        if numel <= per_tensor {
            indices.extend((0..numel).map(|ei| (ti, ei)));
        } else {
            let mut chosen = Vec::with_capacity(per_tensor);
            while chosen.len() < per_tensor {
                let ei = stream.next_below(numel);
                if !chosen.contains(&ei) {
                    chosen.push(ei);
                }
            }
            indices.extend(chosen.into_iter().map(|ei| (ti, ei)));
        }
    }
    indices
}
