use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Running sums of squared gradients, one per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState {
    pub accum: Vec<Tensor>,
}

impl AdagradState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        AdagradState {
            accum: params.into_iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect(),
        }
    }
}

/// `G += g*g; theta -= lr * g / (sqrt(G) + eps)`, elementwise.
pub fn adagrad_step(
    params: &mut [&mut Tensor],
    grads: &[Tensor],
    state: &mut AdagradState,
    lr: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.accum.len() {
        return Err(Error::invalid(
            "adagrad_step",
            format!(
                "{} parameters, {} gradients, {} accumulators",
                params.len(),
                grads.len(),
                state.accum.len()
            ),
        ));
    }
    for ((p, g), acc) in params.iter().zip(grads).zip(&state.accum) {
        if p.shape() != g.shape() || p.shape() != acc.shape() {
            return Err(Error::shape("adagrad_step", p.shape(), g.shape()));
        }
    }
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(&mut state.accum) {
        for ((theta, &gi), gsum) in p.data_mut().iter_mut().zip(g.data()).zip(acc.data_mut()) {
            *gsum += gi * gi;
            *theta -= lr * gi / (gsum.sqrt() + epsilon);
        }
    }
    Ok(())
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients together so their global L2 norm is at most
/// `max_norm`. A `max_norm` of zero disables clipping. Returns the norm
/// before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
