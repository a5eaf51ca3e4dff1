use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Parameter<T>]) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.tensor.numel()]).collect();
        Self {
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update using the gradients stored on `params`.
/// Nothing is modified if any gradient is missing, mis-shaped, or non-finite.
pub fn adam_step<T: Scalar>(params: &mut [Parameter<T>], state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::shape(
            "adam_step",
            format!("optimizer tracks {} tensors, model has {}", state.m.len(), params.len()),
        ));
    }
    for (i, p) in params.iter().enumerate() {
        let grad = p
            .tensor
            .grad()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {} has no gradient slot", p.name)))?;
        if state.m[i].len() != grad.len() || state.v[i].len() != grad.len() {
            return Err(Error::shape(
                "adam_step",
                format!("moment buffers for {} do not match shape {:?}", p.name, p.tensor.shape()),
            ));
        }
        if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient in parameter {} at element {j}",
                p.name
            )));
        }
    }

    state.t += 1;
    let t = state.t as f64;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powf(t));
    let c2 = T::of(1.0 - cfg.beta2.powf(t));
    let (lr, eps, one) = (T::of(cfg.lr), T::of(cfg.eps), T::one());
    for (i, p) in params.iter_mut().enumerate() {
        let grad = p.tensor.grad().expect("checked above").to_vec();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &g), m), v) in p.tensor.data_mut().iter_mut().zip(&grad).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
