//! SGD with classical momentum.

use crate::arch::ModelParams;
use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::tensor::{shape_string, Tensor};

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug)]
pub struct Velocity {
    tensors: Vec<Tensor>,
}

impl Velocity {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Velocity {
            tensors: params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.tensor.shape().to_vec()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }
}

/// One optimizer step: `v <- momentum * v + g`, then `p <- p - lr * v`,
/// elementwise. With `lr == 0` the parameters are left untouched bit-for-bit
/// (the velocity still accumulates).
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    velocity: &mut Velocity,
) -> Result<()> {
    if !lr.is_finite() || lr < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be finite and >= 0, got {lr}"
        )));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {momentum}"
        )));
    }
    if grads.tensors.len() != params.tensors().len()
        || velocity.tensors.len() != params.tensors().len()
    {
        return Err(Error::shape(
            "sgd_step tensor lists",
            format!("{} tensors", params.tensors().len()),
            format!(
                "{} gradients, {} velocities",
                grads.tensors.len(),
                velocity.tensors.len()
            ),
        ));
    }
    for ((named, g), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors.iter())
        .zip(velocity.tensors.iter_mut())
    {
        if named.tensor.shape() != g.shape() || named.tensor.shape() != v.shape() {
            return Err(Error::shape(
                format!("sgd_step parameter {}", named.name),
                shape_string(named.tensor.shape()),
                shape_string(g.shape()),
            ));
        }
        let p = named.tensor.data_mut();
        let vd = v.data_mut();
        let gd = g.data();
        for i in 0..p.len() {
            vd[i] = momentum * vd[i] + gd[i];
            if lr != 0.0 {
                p[i] -= lr * vd[i];
            }
        }
    }
    Ok(())
}
