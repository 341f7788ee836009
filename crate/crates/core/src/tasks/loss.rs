//! Training losses.

use mixerbench_tensor::{Element, Tensor, Var};

use crate::{Error, Result};

/// Mean cross-entropy of `logits [rows, K]` against integer targets.
pub fn cross_entropy<T: Element>(logits: &Var<T>, targets: &[u32]) -> Result<Var<T>> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != targets.len() {
        return Err(Error::invalid(
            "cross_entropy",
            format!("logits {shape:?} for {} targets", targets.len()),
        ));
    }
    let (rows, k) = (shape[0], shape[1]);
    let mut onehot = vec![T::c(0.0); rows * k];
    for (r, &t) in targets.iter().enumerate() {
        if t as usize >= k {
            return Err(Error::invalid("cross_entropy", format!("target {t} out of {k} classes")));
        }
        onehot[r * k + t as usize] = T::c(1.0);
    }
    let onehot = Var::constant(Tensor::from_vec(vec![rows, k], onehot)?);
    Ok(logits.log_softmax()?.mul(&onehot)?.sum()?.mul_scalar(-1.0 / rows as f64)?)
}

/// Cross-entropy of per-image `logits [K]`.
pub fn classification_loss<T: Element>(logits: &Var<T>, label: u32) -> Result<Var<T>> {
    let k = logits.numel();
    cross_entropy(&logits.reshape(vec![1, k])?, &[label])
}

/// Per-pixel cross-entropy of dense `logits [K, E..]` against a mask.
pub fn segmentation_loss<T: Element>(logits: &Var<T>, mask: &[u32]) -> Result<Var<T>> {
    let k = logits.shape()[0];
    let pixels = logits.numel() / k.max(1);
    cross_entropy(&logits.reshape(vec![k, pixels])?.t()?, mask)
}

/// Which auxiliary term completes the denoising loss. The blurred-MSE
/// reading is an interpretation; `None` drops the term entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaussianTerm {
    None,
    BlurredMse { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseLossConfig {
    pub charbonnier_eps: f64,
    pub gaussian: GaussianTerm,
}

impl Default for DenoiseLossConfig {
    fn default() -> Self {
        DenoiseLossConfig {
            charbonnier_eps: 1e-3,
            gaussian: GaussianTerm::BlurredMse { sigma: 1.5 },
        }
    }
}

fn check_same<T: Element>(op: &'static str, pred: &Var<T>, target: &Tensor<T>) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::invalid(op, format!("pred {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    Ok(())
}

pub fn mse<T: Element>(pred: &Var<T>, target: &Tensor<T>) -> Result<Var<T>> {
    check_same("mse", pred, target)?;
    Ok(pred.sub(&Var::constant(target.clone()))?.square()?.mean()?)
}

/// Mean of `sqrt((p - t)^2 + eps^2)`.
pub fn charbonnier<T: Element>(pred: &Var<T>, target: &Tensor<T>, eps: f64) -> Result<Var<T>> {
    check_same("charbonnier", pred, target)?;
    Ok(pred
        .sub(&Var::constant(target.clone()))?
        .square()?
        .add_scalar(eps * eps)?
        .sqrt()?
        .mean()?)
}

/// Row-normalized Gaussian smoothing matrix `M` so that `x @ M` blurs
/// along the last axis; taps past the border are dropped.
pub fn blur_matrix<T: Element>(len: usize, sigma: f64) -> Result<Tensor<T>> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut m = vec![0.0; len * len];
    for out in 0..len {
        let lo = out.saturating_sub(radius);
        let hi = (out + radius).min(len - 1);
        let w: Vec<f64> = (lo..=hi)
            .map(|i| (-((i as f64 - out as f64).powi(2)) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = w.iter().sum();
        for (i, wi) in (lo..=hi).zip(w) {
            m[i * len + out] = wi / total;
        }
    }
    Ok(Tensor::from_vec(vec![len, len], m)?.cast()?)
}

/// Separable Gaussian blur over every spatial axis of `x [C, E..]`.
pub fn gaussian_blur<T: Element>(x: &Var<T>, sigma: f64) -> Result<Var<T>> {
    let rank = x.rank();
    let mut y = x.clone();
    for axis in 1..rank {
        // bring `axis` last, blur, and move it back
        let mut perm: Vec<usize> = (0..rank).filter(|&a| a != axis).collect();
        perm.push(axis);
        let mut inverse = vec![0; rank];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let m = Var::constant(blur_matrix::<T>(x.shape()[axis], sigma)?);
        y = y.permute(&perm)?.matmul(&m)?.permute(&inverse)?;
    }
    Ok(y)
}

/// MSE + Charbonnier + Gaussian term.
pub fn denoise_loss<T: Element>(pred: &Var<T>, target: &Tensor<T>, cfg: &DenoiseLossConfig) -> Result<Var<T>> {
    check_same("denoise_loss", pred, target)?;
    let mut loss = mse(pred, target)?.add(&charbonnier(pred, target, cfg.charbonnier_eps)?)?;
    if let GaussianTerm::BlurredMse { sigma } = cfg.gaussian {
        let blurred = gaussian_blur(pred, sigma)?;
        let target_blurred = gaussian_blur(&Var::constant(target.clone()), sigma)?.into_value();
        loss = loss.add(&mse(&blurred, &target_blurred)?)?;
    }
    Ok(loss)
}
