//! Adam without weight decay.

use mixerbench_tensor::{Element, Tensor};

use crate::params::Params;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<T: Element>(params: &Params<T>) -> Self {
        let zeros: Vec<Vec<f64>> = params.values().iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step<T: Element>(
    params: &mut Params<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState,
    lr: f64,
    adam: &Adam,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::invalid(
            "adam_step",
            format!("{} params, {} grads, {} state buffers", params.len(), grads.len(), state.m.len()),
        ));
    }
    for (i, (p, g)) in params.values().iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].len() != p.numel() || state.v[i].len() != p.numel() {
            return Err(Error::invalid(
                "adam_step",
                format!("parameter {i}: shape {:?}, grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - adam.beta1.powi(t);
    let c2 = 1.0 - adam.beta2.powi(t);
    let ids: Vec<_> = params.ids().collect();
    for (i, id) in ids.into_iter().enumerate() {
        let p = params.get(id);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let updated: Vec<T> = p
            .data()
            .iter()
            .zip(grads[i].data())
            .zip(m.iter_mut().zip(v.iter_mut()))
            .map(|((&p, &g), (m, v))| {
                let g = g.f64();
                *m = adam.beta1 * *m + (1.0 - adam.beta1) * g;
                *v = adam.beta2 * *v + (1.0 - adam.beta2) * g * g;
                let step = lr * (*m / c1) / ((*v / c2).sqrt() + adam.eps);
                T::c(p.f64() - step)
            })
            .collect();
        let shape = p.shape().to_vec();
        params.set(id, Tensor::from_vec(shape, updated)?);
    }
    Ok(())
}
